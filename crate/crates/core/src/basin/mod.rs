//! Monte-Carlo certification of (ε, δ)-basins over balls in parameter space.
//!
//! Condition 1 bounds the mean absolute deviation of the loss inside the set,
//! conditions 2 and 3 require the loss to rise by at least 2ε under Gaussian
//! and outward half-normal perturbations of boundary points.

mod fit;

pub use fit::{fit_basin, FitOptions, FitOutcome};

use serde::{Deserialize, Serialize};

use crate::dataops::Dataset;
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::model::net::Compiled;
use crate::model::{ArchDescriptor, ParamVector};
use crate::numerics::rng::{gaussian, streams, uniform_in_ball};
use crate::numerics::{distance, dot, RngStream};

/// A loss over flat `f64` parameter vectors.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;
    fn loss(&self, w: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Landscape for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        Ok((self.1)(w))
    }
}

/// Test error rate of a network on a fixed dataset.
pub struct ErrorRate<'a> {
    pub arch: &'a ArchDescriptor,
    pub template: ParamVector,
    pub data: &'a Dataset,
}

impl Landscape for ErrorRate<'_> {
    fn dim(&self) -> usize {
        self.template.len()
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        let p = self.template.from_f64(w)?;
        let net = Compiled::new(&p, self.arch)?;
        let e = crate::trainer::eval::evaluate_compiled(&net, self.data)?;
        Ok(1.0 - e.accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSet {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallSet {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return domain(format!("ball radius must be finite and positive, got {radius}"));
        }
        Ok(BallSet { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        distance(w, &self.center) <= self.radius
    }
}

/// Farthest point of the ball on the ray from `w1` through `w2`.
pub fn boundary_point(set: &BallSet, w1: &[f64], w2: &[f64]) -> Result<Vec<f64>> {
    if w1.len() != set.dim() || w2.len() != set.dim() {
        return Err(Error::Size("points and ball differ in dimension".into()));
    }
    let d: Vec<f64> = w2.iter().zip(w1).map(|(a, b)| a - b).collect();
    let dd = dot(&d, &d);
    if dd == 0.0 {
        return Err(Error::DegenerateRay);
    }
    // ‖w1 − c + α d‖² = r², largest root.
    let o: Vec<f64> = w1.iter().zip(&set.center).map(|(a, c)| a - c).collect();
    let b = dot(&o, &d);
    let c = dot(&o, &o) - set.radius * set.radius;
    let disc = (b * b - dd * c).max(0.0);
    let alpha = (-b + disc.sqrt()) / dd;
    Ok(w1.iter().zip(&d).map(|(w, dv)| w + alpha * dv).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// `estimate ≤ bound` with a 2-standard-error margin.
    fn at_most(estimate: f64, se: f64, bound: f64) -> Self {
        if estimate + 2.0 * se < bound {
            Verdict::Pass
        } else if estimate - 2.0 * se > bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    /// `estimate ≥ bound` with a 2-standard-error margin.
    fn at_least(estimate: f64, se: f64, bound: f64) -> Self {
        if estimate - 2.0 * se > bound {
            Verdict::Pass
        } else if estimate + 2.0 * se < bound {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub mu: Estimate,
    pub cond1: Estimate,
    pub cond2: Estimate,
    pub cond3: Estimate,
    pub epsilon: f64,
    pub delta: f64,
    pub verdicts: [Verdict; 3],
    pub samples: usize,
    pub seed: u64,
}

impl BasinReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| *v == Verdict::Pass)
    }

    /// Verdicts recomputed from the stored estimates at another ε.
    pub fn verdicts_at(&self, epsilon: f64) -> [Verdict; 3] {
        [
            Verdict::at_most(self.cond1.value, self.cond1.stderr, epsilon),
            Verdict::at_least(self.cond2.value, self.cond2.stderr, 2.0 * epsilon),
            Verdict::at_least(self.cond3.value, self.cond3.stderr, 2.0 * epsilon),
        ]
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

fn checked(loss: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss { context: context() })
    }
}

/// Sample-level state reused across δ values (common random numbers).
pub(crate) struct Sampler<'a, L: Landscape> {
    set: &'a BallSet,
    landscape: &'a L,
    seed: u64,
    samples: usize,
    pub mu: Estimate,
    pub cond1: Estimate,
    mu_var: f64,
}

impl<'a, L: Landscape> Sampler<'a, L> {
    pub fn new(set: &'a BallSet, landscape: &'a L, samples: usize, seed: u64) -> Result<Self> {
        if samples < 100 {
            return domain(format!("at least 100 samples required, got {samples}"));
        }
        if landscape.dim() != set.dim() {
            return Err(Error::Size("landscape and ball differ in dimension".into()));
        }
        let losses = exec::try_map_indexed(samples, |i| {
            let mut rng = RngStream::derive(seed, &[streams::SAMPLING, i as u64]);
            let w = uniform_in_ball(&mut rng, &set.center, set.radius)?;
            checked(landscape.loss(&w)?, || format!("uniform sample {i}"))
        })?;
        let (mu, mu_var) = mean_var(&losses);
        let dev: Vec<f64> = losses.iter().map(|l| (l - mu).abs()).collect();
        let (c1, c1_var) = mean_var(&dev);
        let n = samples as f64;
        Ok(Sampler {
            set,
            landscape,
            seed,
            samples,
            mu: Estimate { value: mu, stderr: (mu_var / n).sqrt() },
            cond1: Estimate { value: c1, stderr: (c1_var / n).sqrt() },
            mu_var,
        })
    }

    /// Boundary point and unit outward direction for pair `i`.
    fn pair(&self, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = RngStream::derive(self.seed, &[streams::PAIRS, i as u64]);
        let w1 = uniform_in_ball(&mut rng, &self.set.center, self.set.radius)?;
        let w2 = uniform_in_ball(&mut rng, &self.set.center, self.set.radius)?;
        let f = boundary_point(self.set, &w1, &w2)?;
        let d: Vec<f64> = f.iter().zip(&w1).map(|(a, b)| a - b).collect();
        let len = dot(&d, &d).sqrt();
        if len == 0.0 {
            return Err(Error::DegenerateRay);
        }
        Ok((f, d.into_iter().map(|x| x / len).collect()))
    }

    /// Conditions 2 and 3 at `delta`.
    pub fn conditions(&self, delta: f64) -> Result<(Estimate, Estimate)> {
        let n = self.set.dim();
        let scale = delta / (n as f64).sqrt();
        let pairs = exec::try_map_indexed(self.samples, |i| {
            let (f, d) = self.pair(i)?;
            let mut rng = RngStream::derive(self.seed, &[streams::NOISE, i as u64]);
            let z = gaussian(&mut rng, n, 1.0)?;
            let nu = RngStream::derive(self.seed, &[streams::DIRECTION, i as u64]).next_normal();
            let shifted: Vec<f64> = f.iter().zip(&z).map(|(a, b)| a + scale * b).collect();
            let pushed: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a + (delta * nu).abs() * b).collect();
            let l2 = checked(self.landscape.loss(&shifted)?, || format!("condition 2 sample {i}"))?;
            let l3 = checked(self.landscape.loss(&pushed)?, || format!("condition 3 sample {i}"))?;
            Ok((l2, l3))
        })?;
        let n = self.samples as f64;
        let est = |v: Vec<f64>| {
            let (m, var) = mean_var(&v);
            Estimate { value: m - self.mu.value, stderr: (var / n + self.mu_var / n).sqrt() }
        };
        Ok((est(pairs.iter().map(|p| p.0).collect()), est(pairs.iter().map(|p| p.1).collect())))
    }

    pub fn report(&self, epsilon: f64, delta: f64) -> Result<BasinReport> {
        let (cond2, cond3) = self.conditions(delta)?;
        let mut r = BasinReport {
            mu: self.mu,
            cond1: self.cond1,
            cond2,
            cond3,
            epsilon,
            delta,
            verdicts: [Verdict::Inconclusive; 3],
            samples: self.samples,
            seed: self.seed,
        };
        r.verdicts = r.verdicts_at(epsilon);
        Ok(r)
    }
}

/// Estimates μ and the three conditions of an (ε, δ)-basin on `set`.
pub fn check_basin<L: Landscape>(set: &BallSet, landscape: &L, epsilon: f64, delta: f64, samples: usize, seed: u64) -> Result<BasinReport> {
    if !(epsilon > 0.0 && delta >= 0.0) {
        return domain("need ε > 0 and δ ≥ 0");
    }
    Sampler::new(set, landscape, samples, seed)?.report(epsilon, delta)
}
