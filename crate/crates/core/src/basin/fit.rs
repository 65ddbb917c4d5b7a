use serde::{Deserialize, Serialize};

use super::{BallSet, BasinReport, Landscape, Sampler, Verdict};
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::numerics::rng::{gaussian, streams};
use crate::numerics::{distance, norm2, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Evenly spaced points on the segment used for μ̂.
    pub interval_points: usize,
    pub samples: usize,
    pub seed: u64,
    /// First outward step as a fraction of ‖b − a‖.
    pub initial_step: f64,
    /// First outward step when a == b.
    pub degenerate_step: f64,
    pub max_doublings: usize,
    pub walk_bisection_steps: usize,
    pub delta_bisection_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            interval_points: 25,
            samples: 500,
            seed: 0,
            initial_step: 0.05,
            degenerate_step: 0.01,
            max_doublings: 40,
            walk_bisection_steps: 30,
            delta_bisection_steps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted {
        set: BallSet,
        report: BasinReport,
        epsilon_certified: f64,
        /// Smallest δ passing conditions 2 and 3 within [1e-3·r, 10·r].
        delta_certified: Option<f64>,
        mu_interval: f64,
        degenerate: bool,
    },
    NotInOneBasin {
        mu_interval: f64,
        threshold: f64,
        interval_losses: Vec<f64>,
    },
    /// The loss stays below the threshold out to `max_distance` along the segment's line,
    /// e.g. an error rate that saturates below μ̂ + 2ε.
    Unbounded {
        mu_interval: f64,
        threshold: f64,
        max_distance: f64,
    },
}

fn along(origin: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    origin.iter().zip(dir).map(|(o, d)| o + t * d).collect()
}

/// Distance along `dir` at which the loss first exceeds `threshold`; `Err(distance)`
/// when it never does within the doubling budget.
fn walk<L: Landscape>(
    landscape: &L,
    origin: &[f64],
    dir: &[f64],
    step: f64,
    threshold: f64,
    opts: &FitOptions,
) -> Result<std::result::Result<f64, f64>> {
    let above = |t: f64| -> Result<bool> { Ok(landscape.loss(&along(origin, dir, t))? > threshold) };
    let (mut lo, mut hi) = (0.0, step);
    let mut doublings = 0;
    while !above(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > opts.max_doublings {
            return Ok(Err(lo));
        }
    }
    for _ in 0..opts.walk_bisection_steps {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Ok(0.5 * (lo + hi)))
}

/// Fits a ball through the basin containing `a` and `b` and certifies (ε, δ).
pub fn fit_basin<L: Landscape>(a: &[f64], b: &[f64], landscape: &L, epsilon_target: f64, opts: &FitOptions) -> Result<FitOutcome> {
    if a.len() != b.len() || a.len() != landscape.dim() {
        return Err(Error::Size("endpoints and landscape differ in dimension".into()));
    }
    if !(epsilon_target > 0.0) || opts.interval_points < 2 {
        return domain("need ε > 0 and at least two interval points");
    }
    let k = opts.interval_points;
    let interval_losses = exec::try_map_indexed(k, |i| {
        let l = i as f64 / (k - 1) as f64;
        let w: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - l) * x + l * y).collect();
        landscape.loss(&w)
    })?;
    let mu_interval = interval_losses.iter().sum::<f64>() / k as f64;
    let threshold = mu_interval + 2.0 * epsilon_target;
    if interval_losses.iter().any(|&l| l > threshold) {
        return Ok(FitOutcome::NotInOneBasin { mu_interval, threshold, interval_losses });
    }

    let gap = distance(a, b);
    let degenerate = gap == 0.0;
    let (dir, step) = if degenerate {
        let mut rng = RngStream::derive(opts.seed, &[streams::DIRECTION]);
        let z = gaussian(&mut rng, a.len(), 1.0)?;
        let len = norm2(&z);
        (z.into_iter().map(|v| v / len).collect::<Vec<f64>>(), opts.degenerate_step)
    } else {
        (b.iter().zip(a).map(|(y, x)| (y - x) / gap).collect(), opts.initial_step * gap)
    };
    let back: Vec<f64> = dir.iter().map(|d| -d).collect();
    let (t_plus, t_minus) = match (walk(landscape, b, &dir, step, threshold, opts)?, walk(landscape, a, &back, step, threshold, opts)?) {
        (Ok(p), Ok(m)) => (p, m),
        (Err(d), _) | (_, Err(d)) => return Ok(FitOutcome::Unbounded { mu_interval, threshold, max_distance: d }),
    };
    let hit_plus = along(b, &dir, t_plus);
    let hit_minus = along(a, &back, t_minus);
    let center: Vec<f64> = hit_plus.iter().zip(&hit_minus).map(|(p, m)| 0.5 * (p + m)).collect();
    let set = BallSet::new(center, 0.5 * distance(&hit_plus, &hit_minus))?;

    let sampler = Sampler::new(&set, landscape, opts.samples, opts.seed)?;
    let epsilon = sampler.cond1.value;
    let r = set.radius;
    let passes = |delta: f64| -> Result<(bool, BasinReport)> {
        let rep = sampler.report(epsilon, delta)?;
        Ok((rep.verdicts[1] == Verdict::Pass && rep.verdicts[2] == Verdict::Pass, rep))
    };
    let (lo_bound, hi_bound) = (1e-3 * r, 10.0 * r);
    let mut failing = None;
    let mut delta = lo_bound;
    let mut found = None;
    loop {
        let (ok, rep) = passes(delta)?;
        if ok {
            found = Some((delta, rep));
            break;
        }
        failing = Some(delta);
        if delta >= hi_bound {
            break;
        }
        delta = (delta * 2.0).min(hi_bound);
    }
    let (delta_certified, report) = match found {
        None => (None, sampler.report(epsilon, hi_bound)?),
        Some((mut hi, mut rep)) => {
            if let Some(mut lo) = failing {
                for _ in 0..opts.delta_bisection_steps {
                    let mid = 0.5 * (lo + hi);
                    let (ok, r) = passes(mid)?;
                    if ok {
                        hi = mid;
                        rep = r;
                    } else {
                        lo = mid;
                    }
                }
            }
            (Some(hi), rep)
        }
    };
    Ok(FitOutcome::Fitted { set, report, epsilon_certified: epsilon, delta_certified, mu_interval, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;

    fn quick() -> FitOptions {
        FitOptions { samples: 200, delta_bisection_steps: 8, ..FitOptions::default() }
    }

    #[test]
    fn bowl_fit_is_centered() {
        let bowl = (2usize, |w: &[f64]| dot(w, w));
        let out = fit_basin(&[0.1, 0.0], &[-0.1, 0.0], &bowl, 0.05, &quick()).unwrap();
        let FitOutcome::Fitted { set, epsilon_certified, delta_certified, degenerate, .. } = out else {
            panic!("expected a fit");
        };
        assert!(!degenerate);
        assert!(norm2(&set.center) < 1e-6);
        // 25-point mean of (0.1·x)² on x ∈ [−1, 1] is 0.01·26/72; boundary at r² = μ̂ + 2ε.
        assert!((set.radius - (0.01f64 * 26.0 / 72.0 + 0.1).sqrt()).abs() < 1e-6);
        assert!(epsilon_certified < 0.05);
        assert!(delta_certified.is_some());
    }

    #[test]
    fn separated_wells_not_in_one_basin() {
        let wells = (1usize, |w: &[f64]| ((w[0] - 1.0).powi(2)).min((w[0] + 1.0).powi(2)));
        let out = fit_basin(&[-1.0], &[1.0], &wells, 0.05, &quick()).unwrap();
        assert!(matches!(out, FitOutcome::NotInOneBasin { .. }));
    }

    #[test]
    fn saturating_loss_is_unbounded() {
        let capped = (2usize, |w: &[f64]| dot(w, w).min(0.05));
        let opts = FitOptions { max_doublings: 10, ..quick() };
        let out = fit_basin(&[0.1, 0.0], &[-0.1, 0.0], &capped, 0.05, &opts).unwrap();
        assert!(matches!(out, FitOutcome::Unbounded { .. }));
    }

    #[test]
    fn identical_endpoints_walk_outward() {
        let bowl = (3usize, |w: &[f64]| dot(w, w));
        let out = fit_basin(&[0.0; 3], &[0.0; 3], &bowl, 0.05, &quick()).unwrap();
        let FitOutcome::Fitted { set, degenerate, .. } = out else { panic!("expected a fit") };
        assert!(degenerate);
        assert!((set.radius - 0.1f64.sqrt()).abs() < 1e-6);
    }
}
