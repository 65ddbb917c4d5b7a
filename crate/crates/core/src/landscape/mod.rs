//! Linear interpolation between two parameter vectors and barrier metrics.

use serde::{Deserialize, Serialize};

use crate::dataops::Dataset;
use crate::error::{domain, Result};
use crate::exec;
use crate::model::{ArchDescriptor, ParamVector};
use crate::persistence::{Cell, ColumnKind, Table};
use crate::trainer::evaluate;

/// `(1 − λ)·θ + λ·θ̃`, computed in `f64`.
pub fn interpolate(theta: &ParamVector, theta_tilde: &ParamVector, lambda: f64) -> Result<ParamVector> {
    theta.check_same_layout(theta_tilde)?;
    let values = theta
        .values
        .iter()
        .zip(&theta_tilde.values)
        .map(|(&a, &b)| ((1.0 - lambda) * a as f64 + lambda * b as f64) as f32)
        .collect();
    theta.with_values(values)
}

/// Evenly spaced λ values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid(pub Vec<f64>);

impl LambdaGrid {
    pub fn uniform(start: f64, end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(start < end) || !start.is_finite() || !end.is_finite() {
            return domain(format!("bad λ grid {start}:{end}:{points}"));
        }
        let span = end - start;
        let last = (points - 1) as f64;
        Ok(LambdaGrid((0..points).map(|i| start + span * i as f64 / last).collect()))
    }

    /// 25 points on [0, 1].
    pub fn interpolation() -> Self {
        Self::uniform(0.0, 1.0, 25).expect("valid grid")
    }

    /// 61 points on [−1, 2].
    pub fn extrapolation() -> Self {
        Self::uniform(-1.0, 2.0, 61).expect("valid grid")
    }

    /// Parses `start:end:points`, e.g. `-1:2:61`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return domain(format!("λ grid must look like start:end:points, got {s:?}"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| crate::Error::Domain(format!("bad number {p:?} in λ grid")));
        let points =
            parts[2].trim().parse::<usize>().map_err(|_| crate::Error::Domain(format!("bad point count in {s:?}")))?;
        Self::uniform(num(parts[0])?, num(parts[1])?, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("λ grid must be strictly increasing");
        }
        if !self.0.contains(&0.0) || !self.0.contains(&1.0) {
            return domain("λ grid must contain 0 and 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

/// Train and test splits evaluated under one name.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierCurve {
    pub lambdas: Vec<f64>,
    pub datasets: Vec<String>,
    /// `metrics[i][d]`: λ index `i`, dataset `d`.
    pub metrics: Vec<Vec<PointMetrics>>,
    pub endpoints: (String, String),
}

/// Curve from an arbitrary per-λ evaluator, evaluated in parallel.
pub fn barrier_curve_with<F>(grid: &LambdaGrid, datasets: Vec<String>, endpoints: (String, String), eval: F) -> Result<BarrierCurve>
where
    F: Fn(f64) -> Result<Vec<PointMetrics>> + Sync + Send,
{
    grid.validate()?;
    let metrics = exec::try_map_indexed(grid.0.len(), |i| eval(grid.0[i]))?;
    if metrics.iter().any(|m| m.len() != datasets.len()) {
        return domain("evaluator returned the wrong number of datasets");
    }
    Ok(BarrierCurve { lambdas: grid.0.clone(), datasets, metrics, endpoints })
}

/// Evaluates every interpolant `Θ_λ` on every dataset.
pub fn barrier_curve(
    a: &ParamVector,
    b: &ParamVector,
    arch: &ArchDescriptor,
    grid: &LambdaGrid,
    sets: &[EvalSet],
    endpoints: (String, String),
) -> Result<BarrierCurve> {
    a.check_same_layout(b)?;
    if a.index != ParamVector::index_for(arch) {
        return domain("endpoint parameters do not match the architecture");
    }
    let names = sets.iter().map(|s| s.name.clone()).collect();
    barrier_curve_with(grid, names, endpoints, |lambda| {
        let p = interpolate(a, b, lambda)?;
        sets.iter()
            .map(|s| {
                let tr = evaluate(&p, arch, &s.train)?;
                let te = evaluate(&p, arch, &s.test)?;
                Ok(PointMetrics { train_loss: tr.loss, train_acc: tr.accuracy, test_loss: te.loss, test_acc: te.accuracy })
            })
            .collect()
    })
}

/// Loss along the segment for a scalar loss of one variable.
pub fn scalar_curve(loss: impl Fn(f64) -> f64, a: f64, b: f64, grid: &LambdaGrid) -> Vec<f64> {
    grid.0.iter().map(|&l| loss((1.0 - l) * a + l * b)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Loss,
    Accuracy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    Train,
    Test,
}

/// Largest excursion above (loss) or below (accuracy) the straight line joining
/// the values at λ = 0 and λ = 1, over λ ∈ [0, 1], clamped at 0.
pub fn barrier_of(lambdas: &[f64], values: &[f64], metric: Metric) -> Result<f64> {
    let at = |x: f64| lambdas.iter().position(|&l| l == x).map(|i| values[i]);
    let (Some(v0), Some(v1)) = (at(0.0), at(1.0)) else {
        return domain("barrier needs values at λ = 0 and λ = 1");
    };
    let mut worst: f64 = 0.0;
    for (&l, &v) in lambdas.iter().zip(values) {
        if !(0.0..=1.0).contains(&l) {
            continue;
        }
        let base = (1.0 - l) * v0 + l * v1;
        let excess = match metric {
            Metric::Loss => v - base,
            Metric::Accuracy => base - v,
        };
        worst = worst.max(excess);
    }
    Ok(worst)
}

impl BarrierCurve {
    pub fn series(&self, dataset: usize, split: SplitSel, metric: Metric) -> Vec<f64> {
        self.metrics
            .iter()
            .map(|m| {
                let p = m[dataset];
                match (split, metric) {
                    (SplitSel::Train, Metric::Loss) => p.train_loss,
                    (SplitSel::Train, Metric::Accuracy) => p.train_acc,
                    (SplitSel::Test, Metric::Loss) => p.test_loss,
                    (SplitSel::Test, Metric::Accuracy) => p.test_acc,
                }
            })
            .collect()
    }

    /// Barrier height on one dataset and split.
    pub fn barrier_height(&self, dataset: usize, split: SplitSel, metric: Metric) -> Result<f64> {
        if dataset >= self.datasets.len() {
            return domain(format!("no dataset {dataset} in curve"));
        }
        barrier_of(&self.lambdas, &self.series(dataset, split, metric), metric)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            ("lambda", ColumnKind::Real),
            ("dataset", ColumnKind::Text),
            ("train_loss", ColumnKind::Real),
            ("train_acc", ColumnKind::Real),
            ("test_loss", ColumnKind::Real),
            ("test_acc", ColumnKind::Real),
        ]);
        for (l, row) in self.lambdas.iter().zip(&self.metrics) {
            for (name, p) in self.datasets.iter().zip(row) {
                t.push(vec![
                    Cell::Real(*l),
                    Cell::Text(name.clone()),
                    Cell::Real(p.train_loss),
                    Cell::Real(p.train_acc),
                    Cell::Real(p.test_loss),
                    Cell::Real(p.test_acc),
                ]);
            }
        }
        t
    }
}
