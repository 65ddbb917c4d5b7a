//! Module criticality: how far along its path a module can move, under how much
//! noise, before the training loss exceeds ε.

use serde::{Deserialize, Serialize};

use crate::dataops::Dataset;
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::model::net::Compiled;
use crate::model::{ArchDescriptor, ParamVector};
use crate::numerics::rng::{hash_str, streams};
use crate::numerics::{distance, norm2, RngStream};
use crate::persistence::{Cell, ColumnKind, Table};
use crate::trainer::eval::evaluate_compiled;
use crate::trainer::{Checkpoint, Evaluation};

/// (train, test) loss with one module's parameters replaced.
pub trait PerturbedLoss: Sync {
    fn module_len(&self) -> usize;
    fn losses(&self, module: &[f64]) -> Result<(f64, f64)>;
}

impl<F: Fn(&[f64]) -> (f64, f64) + Sync> PerturbedLoss for (usize, F) {
    fn module_len(&self) -> usize {
        self.0
    }

    fn losses(&self, module: &[f64]) -> Result<(f64, f64)> {
        Ok((self.1)(module))
    }
}

/// Cross-entropy of a network whose other modules stay at `base`.
pub struct ModuleLoss<'a> {
    pub arch: &'a ArchDescriptor,
    pub base: ParamVector,
    pub module: String,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

impl PerturbedLoss for ModuleLoss<'_> {
    fn module_len(&self) -> usize {
        self.base.entry(&self.module).map_or(0, |e| e.length)
    }

    fn losses(&self, module: &[f64]) -> Result<(f64, f64)> {
        let vals: Vec<f32> = module.iter().map(|&v| v as f32).collect();
        let p = self.base.with_module(&self.module, &vals)?;
        let net = Compiled::new(&p, self.arch)?;
        let tr = evaluate_compiled(&net, self.train)?;
        let te = evaluate_compiled(&net, self.test)?;
        Ok((tr.loss, te.loss))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Direct,
    Optimization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Final,
    Optimal,
}

/// Per-element noise standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// σ·‖θ_α‖/√p.
    WeightNorm,
    /// σ·‖θ_E − θ_0‖/√p.
    DisplacementNorm,
    /// σ.
    PerElement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityConfig {
    pub alpha_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub noise_samples: usize,
    pub epsilon: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
}

impl Default for CriticalityConfig {
    fn default() -> Self {
        CriticalityConfig {
            alpha_grid: (0..21).map(|i| i as f64 / 20.0).collect(),
            sigma_grid: log_grid(1e-3, 1.0, 16),
            noise_samples: 20,
            epsilon: 0.1,
            noise_mode: NoiseMode::WeightNorm,
            seed: 0,
        }
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| if i + 1 == points { hi } else if i == 0 { lo } else { (a + (b - a) * i as f64 / (points - 1) as f64).exp() })
        .collect()
}

impl CriticalityConfig {
    pub fn validate(&self) -> Result<()> {
        let sorted = |g: &[f64]| g.windows(2).all(|w| w[0] < w[1]);
        if self.alpha_grid.is_empty() || !sorted(&self.alpha_grid) || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return domain("α grid must be non-empty, strictly increasing and inside [0, 1]");
        }
        if self.sigma_grid.is_empty() || !sorted(&self.sigma_grid) || self.sigma_grid.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return domain("σ grid must be non-empty, strictly increasing and inside (0, 1]");
        }
        if !(self.epsilon > 0.0) {
            return domain("ε must be positive");
        }
        if self.noise_samples == 0 {
            return domain("need at least one noise sample");
        }
        Ok(())
    }
}

/// Piecewise-linear path for one module, parameterized by fraction of its length.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulePath {
    points: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
}

impl ModulePath {
    /// `points[0]` is θ_0, the last point θ_E.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return domain("a module path needs at least two points");
        }
        if points.iter().any(|p| p.len() != points[0].len()) {
            return Err(Error::Size("path points differ in length".into()));
        }
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + distance(&w[0], &w[1]));
        }
        Ok(ModulePath { points, cumulative })
    }

    pub fn direct(init: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        Self::new(vec![init, end])
    }

    pub fn init(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn end(&self) -> &[f64] {
        self.points.last().expect("non-empty")
    }

    /// Point at fraction `alpha` of the cumulative length (linear blend on a direct path).
    pub fn at(&self, alpha: f64) -> Vec<f64> {
        let total = *self.cumulative.last().expect("non-empty");
        if self.points.len() == 2 || total == 0.0 {
            let (a, b) = (&self.points[0], self.end());
            return a.iter().zip(b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
        }
        let target = alpha * total;
        let seg = self.cumulative.windows(2).position(|w| target <= w[1]).unwrap_or(self.points.len() - 2);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if len == 0.0 { 0.0 } else { (target - self.cumulative[seg]) / len };
        let (a, b) = (&self.points[seg], &self.points[seg + 1]);
        a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
    }
}

/// Module path through checkpoints: `[init, intermediates.., endpoint]`.
pub fn module_path(module: &str, init: &Checkpoint, intermediates: &[&Checkpoint], endpoint: &Checkpoint, kind: PathKind) -> Result<ModulePath> {
    let get = |c: &Checkpoint| -> Result<Vec<f64>> {
        if c.arch != init.arch {
            return domain("path checkpoints differ in architecture");
        }
        Ok(c.params.module(module)?.values.iter().map(|&v| v as f64).collect())
    };
    let mut points = vec![get(init)?];
    if kind == PathKind::Optimization {
        for w in intermediates.windows(2) {
            if w[0].meta.epoch > w[1].meta.epoch {
                return domain("optimization path checkpoints must be ordered by epoch");
            }
        }
        for c in intermediates {
            points.push(get(c)?);
        }
    }
    points.push(get(endpoint)?);
    ModulePath::new(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityCell {
    pub alpha: f64,
    pub sigma: f64,
    /// α·‖θ_E − θ_0‖.
    pub distance: f64,
    pub train_loss: f64,
    pub train_stderr: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityMap {
    pub module: String,
    pub epsilon: f64,
    pub displacement: f64,
    /// Row-major over (α, σ).
    pub cells: Vec<CriticalityCell>,
    /// `+∞` when no cell is feasible.
    pub mu: f64,
    pub argmin: Option<(f64, f64)>,
}

impl CriticalityMap {
    pub fn feasible(&self) -> bool {
        self.argmin.is_some()
    }

    /// Objective α²‖θ_E − θ_0‖²/σ² of a cell.
    pub fn objective(alpha: f64, sigma: f64, displacement_sq: f64) -> f64 {
        alpha * alpha * displacement_sq / (sigma * sigma)
    }

    /// μ recomputed from the stored cells under another ε.
    pub fn mu_at(&self, epsilon: f64) -> f64 {
        let d2 = self.displacement * self.displacement;
        self.cells
            .iter()
            .filter(|c| c.train_loss <= epsilon)
            .map(|c| Self::objective(c.alpha, c.sigma, d2))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            ("alpha", ColumnKind::Real),
            ("sigma", ColumnKind::Real),
            ("distance", ColumnKind::Real),
            ("train_loss", ColumnKind::Real),
            ("test_loss", ColumnKind::Real),
            ("gap", ColumnKind::Real),
            ("feasible", ColumnKind::Bool),
        ]);
        for c in &self.cells {
            t.push(vec![
                Cell::Real(c.alpha),
                Cell::Real(c.sigma),
                Cell::Real(c.distance),
                Cell::Real(c.train_loss),
                Cell::Real(c.test_loss),
                Cell::Real(c.gap),
                Cell::Bool(c.feasible),
            ]);
        }
        t
    }
}

/// Evaluates every (α, σ) cell and minimizes the objective over feasible cells.
pub fn criticality_map<L: PerturbedLoss>(module: &str, path: &ModulePath, loss: &L, cfg: &CriticalityConfig) -> Result<CriticalityMap> {
    cfg.validate()?;
    let p = path.init().len();
    if p == 0 || loss.module_len() != p {
        return Err(Error::Size(format!("module has {} parameters, path has {p}", loss.module_len())));
    }
    let displacement = distance(path.end(), path.init());
    let d2 = displacement * displacement;
    let (na, ns) = (cfg.alpha_grid.len(), cfg.sigma_grid.len());
    let module_hash = hash_str(module);
    let cells = exec::try_map_indexed(na * ns, |k| {
        let (ai, si) = (k / ns, k % ns);
        let (alpha, sigma) = (cfg.alpha_grid[ai], cfg.sigma_grid[si]);
        let theta = path.at(alpha);
        let std = match cfg.noise_mode {
            NoiseMode::WeightNorm => sigma * norm2(&theta) / (p as f64).sqrt(),
            NoiseMode::DisplacementNorm => sigma * displacement / (p as f64).sqrt(),
            NoiseMode::PerElement => sigma,
        };
        let mut rng = RngStream::derive(cfg.seed, &[streams::NOISE, module_hash, ai as u64, si as u64]);
        let mut train = Vec::with_capacity(cfg.noise_samples);
        let mut test = Vec::with_capacity(cfg.noise_samples);
        let mut w = vec![0.0; p];
        for _ in 0..cfg.noise_samples {
            for (wi, &t) in w.iter_mut().zip(&theta) {
                *wi = t + std * rng.next_normal();
            }
            let (tr, te) = loss.losses(&w)?;
            if !(tr.is_finite() && te.is_finite()) {
                return Err(Error::NonFiniteLoss { context: format!("module {module}, α={alpha}, σ={sigma}") });
            }
            train.push(tr);
            test.push(te);
        }
        let n = cfg.noise_samples as f64;
        let train_loss = train.iter().sum::<f64>() / n;
        let test_loss = test.iter().sum::<f64>() / n;
        let var = if cfg.noise_samples > 1 {
            train.iter().map(|x| (x - train_loss).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(CriticalityCell {
            alpha,
            sigma,
            distance: alpha * displacement,
            train_loss,
            train_stderr: (var / n).sqrt(),
            test_loss,
            gap: test_loss - train_loss,
            feasible: train_loss <= cfg.epsilon,
        })
    })?;
    let mut mu = f64::INFINITY;
    let mut argmin = None;
    for c in cells.iter().filter(|c| c.feasible) {
        let obj = CriticalityMap::objective(c.alpha, c.sigma, d2);
        if obj < mu {
            mu = obj;
            argmin = Some((c.alpha, c.sigma));
        }
    }
    Ok(CriticalityMap { module: module.to_string(), epsilon: cfg.epsilon, displacement, cells, mu, argmin })
}

/// Σ μ over modules; infeasible if any module is.
pub fn network_criticality(maps: &[CriticalityMap]) -> Result<f64> {
    if let Some(m) = maps.iter().find(|m| !m.feasible()) {
        return Err(Error::Infeasible(format!("module {} has no feasible cell", m.module)));
    }
    Ok(maps.iter().map(|m| m.mu).sum())
}

/// Metrics of `final` with `module` reset to its value in `init`.
pub fn rewind_probe(final_ckpt: &Checkpoint, init: &Checkpoint, module: &str, data: &Dataset) -> Result<Evaluation> {
    if final_ckpt.arch != init.arch {
        return domain("rewind needs checkpoints with the same architecture");
    }
    let src = init.params.module(module)?.values.to_vec();
    let hybrid = final_ckpt.params.with_module(module, &src)?;
    crate::trainer::evaluate(&hybrid, &final_ckpt.arch, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(cfg: &CriticalityConfig) -> CriticalityMap {
        let path = ModulePath::direct(vec![0.0], vec![1.0]).unwrap();
        let loss = (1usize, |w: &[f64]| ((w[0] - 1.0).powi(2), (w[0] - 1.0).powi(2) + 0.1));
        criticality_map("w", &path, &loss, cfg).unwrap()
    }

    #[test]
    fn untouched_module_has_zero_mu() {
        let path = ModulePath::direct(vec![0.3, -0.2], vec![0.3, -0.2]).unwrap();
        let loss = (2usize, |w: &[f64]| (0.01 * (w[0] - 0.3).powi(2), 0.02));
        let m = criticality_map("m", &path, &loss, &CriticalityConfig { noise_samples: 3, ..Default::default() }).unwrap();
        assert_eq!(m.mu, 0.0);
        assert_eq!(network_criticality(&[m.clone()]).unwrap(), 0.0);
        assert_eq!(network_criticality(&[m.clone(), m]).unwrap(), 0.0);
    }

    #[test]
    fn gap_and_epsilon_monotonicity() {
        let cfg = CriticalityConfig { noise_samples: 8, ..Default::default() };
        let m = one_param(&cfg);
        assert_eq!(m.cells.len(), 21 * 16);
        assert!(m.cells.iter().all(|c| (c.gap - (c.test_loss - c.train_loss)).abs() < 1e-12));
        let mus: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&e| m.mu_at(e)).collect();
        assert!(mus[0] >= mus[1] && mus[1] >= mus[2]);
        assert_eq!(m.mu_at(cfg.epsilon), m.mu);
    }

    #[test]
    fn sigma_subset_never_lowers_mu() {
        let m = one_param(&CriticalityConfig { noise_samples: 6, ..Default::default() });
        let d2 = m.displacement * m.displacement;
        let sigmas: Vec<f64> = m.cells.iter().map(|c| c.sigma).filter(|s| *s > 0.01).collect();
        let sub = m
            .cells
            .iter()
            .filter(|c| c.feasible && sigmas.contains(&c.sigma))
            .map(|c| CriticalityMap::objective(c.alpha, c.sigma, d2))
            .fold(f64::INFINITY, f64::min);
        assert!(sub >= m.mu);
    }

    #[test]
    fn infeasible_map() {
        let path = ModulePath::direct(vec![0.0], vec![1.0]).unwrap();
        let loss = (1usize, |_: &[f64]| (5.0, 5.0));
        let m = criticality_map("w", &path, &loss, &CriticalityConfig { noise_samples: 2, ..Default::default() }).unwrap();
        assert!(!m.feasible());
        assert_eq!(m.mu, f64::INFINITY);
        assert!(matches!(network_criticality(&[m]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn polyline_by_length() {
        let path = ModulePath::new(vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(path.at(0.0), vec![0.0, 0.0]);
        assert_eq!(path.at(0.75), vec![3.0, 0.0]);
        assert_eq!(path.at(0.375), vec![1.5, 0.0]);
        assert_eq!(path.at(1.0), vec![3.0, 1.0]);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1.0, 16);
        assert_eq!((g[0], g[15]), (1e-3, 1.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
