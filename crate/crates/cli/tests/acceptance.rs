//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=1,5,8` restricts the run.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use basinscope_cli::commands;
use basinscope_cli::figures::bundle_digests;
use basinscope_cli::{run_figure, ExperimentConfig, FigureId, Workspace};
use basinscope_core::basin::{check_basin, BallSet, Verdict};
use basinscope_core::criticality::{criticality_map, CriticalityConfig, ModulePath, NoiseMode};
use basinscope_core::dataops::shuffle::block_shuffle_slice;
use basinscope_core::dataops::{generate, relative_accuracy_drop, BlockSize, DomainId, DomainSpec, ShuffleSpec, Split};
use basinscope_core::exec::with_jobs;
use basinscope_core::model::{init_random, loss_and_grad_f64, ArchDescriptor, LayerKind};
use basinscope_core::numerics::{Matrix, RngStream};
use basinscope_core::persistence::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use basinscope_core::similarity::{linear_cka, mistake_ratios, MistakeRow};
use basinscope_core::spectrum::conv_singular_values;
use nalgebra::DMatrix;

type Outcome = Result<String, String>;

// Regression constants from the first certified run of the default config.
const PINNED_TRAIN_LOSS_BARRIER: [(&str, f64); 3] = [("pt", 0.0243), ("rit", 1.9952), ("rit_same_init", 2.4824)];
const PINNED_SPEARMAN: f64 = 0.3143;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

/// splitmix64, kept local so inputs do not depend on the generator under test.
struct Mix(u64);

impl Mix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn sym(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    fn normal(&mut self) -> f64 {
        let u = self.unit().max(1e-300);
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * self.unit()).cos()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

fn csv(path: &Path) -> Vec<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("column {col}: {:?}", row[col]))
}

// ---- 1: convolution spectrum ---------------------------------------------

fn dense_conv(kernel: &[f64], k: usize, cin: usize, cout: usize, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n * n * cout, n * n * cin);
    let pad = k / 2;
    for y in 0..n {
        for x in 0..n {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (y + n + ky - pad) % n;
                    let ix = (x + n + kx - pad) % n;
                    for ci in 0..cin {
                        for co in 0..cout {
                            m[((y * n + x) * cout + co, (iy * n + ix) * cin + ci)] += kernel[((ky * k + kx) * cin + ci) * cout + co];
                        }
                    }
                }
            }
        }
    }
    m
}

fn spectrum_matches_dense_svd() -> Outcome {
    let start = Instant::now();
    let mut rng = Mix(1);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let k = [1, 3][rng.below(2)];
        let (cin, cout) = (1 + rng.below(3), 1 + rng.below(3));
        let n = [4, 8][rng.below(2)];
        let kernel: Vec<f64> = (0..k * k * cin * cout).map(|_| rng.normal()).collect();
        let fast = conv_singular_values(&kernel, k, cin, cout, n).map_err(|e| e.to_string())?;
        let mut exact: Vec<f64> = dense_conv(&kernel, k, cin, cout, n).singular_values().iter().copied().collect();
        exact.sort_by(|a, b| b.total_cmp(a));
        exact.truncate(fast.len());
        ensure!(fast.len() == n * n * cin.min(cout), "case {case}: {} values, expected {}", fast.len(), n * n * cin.min(cout));
        let scale = exact[0].max(1e-12);
        for (a, b) in fast.iter().zip(&exact) {
            let err = (a - b).abs() / scale;
            worst = worst.max(err);
            ensure!(err <= 1e-5, "case {case} (k={k}, cin={cin}, cout={cout}, n={n}): {a} vs {b}");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    Ok(format!("50 kernels, max relative error {worst:.1e}, {secs:.2}s"))
}

// ---- 2: gradients --------------------------------------------------------

fn gradients_match_finite_differences() -> Outcome {
    let arch = ArchDescriptor::tiny4();
    let mut params = init_random(&arch, &mut RngStream::new(7, 2));
    let mut rng = Mix(2);
    for v in params.values.iter_mut() {
        *v += (0.01 * rng.sym()) as f32;
    }
    let data = generate(&DomainSpec::new(DomainId::Source), Split::Train, 8, 3).map_err(|e| e.to_string())?;
    let w: Vec<f64> = params.to_f64();
    let (_, grad) = loss_and_grad_f64(&arch, &w, &data.images, &data.labels).map_err(|e| e.to_string())?;
    let mut conv = Vec::new();
    let mut dense = Vec::new();
    for (layer, entry) in arch.layers().iter().zip(&params.index) {
        match layer.kind {
            LayerKind::Conv(_) => conv.extend(entry.range()),
            LayerKind::Dense { .. } => dense.extend(entry.range()),
        }
    }
    let h = 1e-5;
    let mut report = Vec::new();
    for (kind, coords) in [("conv", conv), ("dense", dense)] {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let i = coords[rng.below(coords.len())];
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let lp = loss_and_grad_f64(&arch, &wp, &data.images, &data.labels).map_err(|e| e.to_string())?.0;
            let lm = loss_and_grad_f64(&arch, &wm, &data.images, &data.labels).map_err(|e| e.to_string())?.0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
            ensure!(err < 1e-2, "{kind} coordinate {i}: analytic {} vs finite difference {fd}", grad[i]);
        }
        report.push(format!("{kind} max rel err {worst:.1e}"));
    }
    Ok(report.join(", "))
}

// ---- 3: CKA --------------------------------------------------------------

fn to_matrix(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.set(r, c, m[(r, c)]);
        }
    }
    out
}

fn gram_cka(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &h * (x * x.transpose()) * &h;
    let l = &h * (y * y.transpose()) * &h;
    let hsic = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(b).sum();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

fn cka_properties() -> Outcome {
    let mut rng = Mix(3);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = 10 + rng.below(30);
        let (p, q) = (2 + rng.below(9), 2 + rng.below(9));
        let x = DMatrix::from_fn(n, p, |_, _| rng.normal());
        let y = DMatrix::from_fn(n, q, |_, _| rng.normal());
        let cka = |a: &DMatrix<f64>, b: &DMatrix<f64>| linear_cka(&to_matrix(a), &to_matrix(b)).map(|c| c.value).map_err(|e| e.to_string());
        let xy = cka(&x, &y)?;
        let checks = [
            ("self", cka(&x, &x)?, 1.0),
            ("symmetry", cka(&y, &x)?, xy),
            ("isotropic scaling", cka(&(&x * 3.7), &(&y * 0.2))?, xy),
            ("orthogonal", cka(&(&x * DMatrix::from_fn(p, p, |_, _| rng.normal()).qr().q()), &y)?, xy),
            ("gram form", xy, gram_cka(&x, &y)),
        ];
        for (name, got, want) in checks {
            worst = worst.max((got - want).abs());
            ensure!((got - want).abs() <= 1e-6, "case {case}, {name}: {got} vs {want}");
        }
    }
    Ok(format!("20 instances, max deviation {worst:.1e}"))
}

// ---- 4: mistake ratios ---------------------------------------------------

fn mistake_ratio_examples() -> Outcome {
    // The published ratios are truncated, not rounded, to 4 decimals.
    let round4 = |v: f64| format!("{:.4}", (v * 1e4).floor() / 1e4);
    let (r1, r2) = mistake_ratios(645, 832, 3597);
    ensure!(round4(r1.value) == "0.1878" && round4(r2.value) == "0.1520", "got {} / {}", r1.value, r2.value);
    let (r1, r2) = mistake_ratios(521, 2940, 3263);
    let row = MistakeRow { class: None, n: 0, acc1: 0.0, acc2: 0.0, g1: 521, g2: 2940, common: 3263, both_correct: 0, r1, r2 };
    let (s1, s2) = row.swapped();
    ensure!(round4(s1.value) == "0.1376" && round4(s2.value) == "0.4739", "swapped got {} / {}", s1.value, s2.value);
    Ok(format!("0.1878/0.1520 and swapped {}/{}", round4(s1.value), round4(s2.value)))
}

// ---- 5: basin certification ------------------------------------------------

const QUAD: usize = 200_001;

/// E[g(Z)], Z ~ N(0, 1), by the midpoint rule on [-10, 10].
fn gauss_mean(g: impl Fn(f64) -> f64) -> f64 {
    let h = 20.0 / QUAD as f64;
    (0..QUAD)
        .map(|i| {
            let z = -10.0 + (i as f64 + 0.5) * h;
            g(z) * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
        / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mean of g over [a, b].
fn interval_mean(a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / QUAD as f64;
    (0..QUAD).map(|i| g(a + (i as f64 + 0.5) * h)).sum::<f64>() / QUAD as f64
}

fn double_well(w: f64) -> f64 {
    ((w - 1.0).powi(2)).min((w + 1.0).powi(2))
}

/// (μ, cond1, cond2, cond3) for a 1-D landscape on [c − r, c + r].
fn interval_oracle(l: impl Fn(f64) -> f64 + Copy, c: f64, r: f64, delta: f64) -> [f64; 4] {
    let mu = interval_mean(c - r, c + r, l);
    let c1 = interval_mean(c - r, c + r, |w| (l(w) - mu).abs());
    // Boundary is c + r or c − r with equal probability, pushed outward.
    let c2 = 0.5 * gauss_mean(|z| l(c + r + delta * z)) + 0.5 * gauss_mean(|z| l(c - r + delta * z)) - mu;
    let c3 = 0.5 * gauss_mean(|z| l(c + r + delta * z.abs())) + 0.5 * gauss_mean(|z| l(c - r - delta * z.abs())) - mu;
    [mu, c1, c2, c3]
}

/// (μ, cond1, cond2, cond3) for ‖w‖² on the unit-centered disk of radius r.
fn bowl_oracle(r: f64, delta: f64) -> [f64; 4] {
    // E[f·u]: f the exit point of the ray from w1 (radius ρ) in direction u at angle θ to w1.
    let (nr, nt) = (800, 1600);
    let mut fu = 0.0;
    for i in 0..nr {
        let rho = (i as f64 + 0.5) * r / nr as f64;
        let mut inner = 0.0;
        for j in 0..nt {
            let th = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / nt as f64;
            let s = (rho * rho * th.cos().powi(2) + r * r - rho * rho).sqrt();
            let len = -rho * th.cos() + s;
            inner += len * len / (2.0 * std::f64::consts::PI * r * r) * s;
        }
        inner *= 2.0 * std::f64::consts::PI / nt as f64;
        fu += 2.0 * rho / (r * r) * inner * r / nr as f64;
    }
    let mu = r * r / 2.0;
    [
        mu,
        r * r / 4.0,
        r * r + delta * delta - mu,
        r * r + 2.0 * delta * (2.0 / std::f64::consts::PI).sqrt() * fu + delta * delta - mu,
    ]
}

fn basin_matches_oracles() -> Outcome {
    let n = 10_000;
    let mut notes = Vec::new();
    let mut compare = |name: &str, rep: &basinscope_core::basin::BasinReport, oracle: [f64; 4]| -> Result<(), String> {
        let est = [rep.mu, rep.cond1, rep.cond2, rep.cond3];
        let mut worst: f64 = 0.0;
        for (k, (e, o)) in est.iter().zip(oracle).enumerate() {
            let z = (e.value - o).abs() / e.stderr.max(1e-15);
            worst = worst.max(z);
            ensure!(z <= 3.0, "{name} quantity {k}: estimate {} ± {} vs exact {o}", e.value, e.stderr);
        }
        notes.push(format!("{name} max {worst:.1}SE"));
        Ok(())
    };
    let well = (1, |w: &[f64]| double_well(w[0]));
    let rep = check_basin(&BallSet::new(vec![1.0], 0.3).unwrap(), &well, 0.05, 1.0, n, 11).map_err(|e| e.to_string())?;
    compare("well [0.7,1.3]", &rep, interval_oracle(double_well, 1.0, 0.3, 1.0))?;
    ensure!(rep.all_pass(), "[0.7, 1.3] verdicts {:?}", rep.verdicts);
    let rep = check_basin(&BallSet::new(vec![0.0], 1.3).unwrap(), &well, 0.05, 1.0, n, 12).map_err(|e| e.to_string())?;
    compare("well [-1.3,1.3]", &rep, interval_oracle(double_well, 0.0, 1.3, 1.0))?;
    ensure!(rep.verdicts[0] == Verdict::Fail, "[-1.3, 1.3] condition 1 verdict {:?}", rep.verdicts[0]);
    let bowl = (2, |w: &[f64]| w[0] * w[0] + w[1] * w[1]);
    let rep = check_basin(&BallSet::new(vec![0.0, 0.0], 1.0).unwrap(), &bowl, 0.05, 0.5, n, 13).map_err(|e| e.to_string())?;
    compare("bowl", &rep, bowl_oracle(1.0, 0.5))?;
    Ok(notes.join(", "))
}

// ---- 6, 9: default-config pipelines ---------------------------------------

struct Heavy {
    _dir: tempfile::TempDir,
    ws: Workspace,
    pretrain_secs: f64,
}

fn heavy(slot: &mut Option<Heavy>) -> Result<&Heavy, String> {
    if slot.is_none() {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ws = Workspace::new(dir.path().join("out"), Some(dir.path().join("data")), ExperimentConfig::default());
        let start = Instant::now();
        commands::pretrain(&ws, &[]).map_err(|e| e.to_string())?;
        let pretrain_secs = start.elapsed().as_secs_f64();
        *slot = Some(Heavy { _dir: dir, ws, pretrain_secs });
    }
    Ok(slot.as_ref().expect("set"))
}

fn barrier_ordering(slot: &mut Option<Heavy>) -> Outcome {
    let h = heavy(slot)?;
    let start = Instant::now();
    let out = run_figure(&h.ws, FigureId::Barrier, &[]).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64() + h.pretrain_secs;
    let mut barrier = HashMap::new();
    for (pair, _) in PINNED_TRAIN_LOSS_BARRIER {
        // Recompute from the curve rather than trusting the summary.
        let rows = csv(&out.dir.join(format!("curve_{pair}.csv")));
        let at = |lam: f64| rows.iter().find(|r| num(r, "lambda") == lam).map(|r| num(r, "train_loss")).unwrap();
        let (l0, l1) = (at(0.0), at(1.0));
        let b = rows.iter().map(|r| num(r, "train_loss") - ((1.0 - num(r, "lambda")) * l0 + num(r, "lambda") * l1)).fold(0.0, f64::max);
        let summary = csv(&out.dir.join("barrier_summary.csv"));
        let s = summary.iter().find(|r| r["pair"] == pair).ok_or(format!("no summary row for {pair}"))?;
        // Tables carry 9 significant digits.
        ensure!(close(num(s, "train_loss_barrier"), b, 1e-7), "{pair}: summary {} vs curve {b}", num(s, "train_loss_barrier"));
        barrier.insert(pair, b);
    }
    let (pt, rit, same) = (barrier["pt"], barrier["rit"], barrier["rit_same_init"]);
    let measured = format!("train loss barriers pt {pt:.4}, rit {rit:.4}, rit_same_init {same:.4}, {secs:.0}s");
    ensure!(pt < rit && pt < same, "ordering violated: {measured}");
    for (pair, pinned) in PINNED_TRAIN_LOSS_BARRIER {
        ensure!(close(barrier[pair], pinned, 0.2), "{pair} drifted from pinned {pinned}: {measured}");
    }
    ensure!(secs < 600.0, "too slow: {measured}");
    Ok(measured)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; v.len()];
    for (i, &x) in v.iter().enumerate() {
        let below = v.iter().filter(|&&y| y < x).count() as f64;
        let ties = v.iter().filter(|&&y| y == x).count() as f64;
        r[i] = below + (ties + 1.0) / 2.0;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn checkpoint_sweep_trend(slot: &mut Option<Heavy>) -> Outcome {
    let h = heavy(slot)?;
    let start = Instant::now();
    let out = run_figure(&h.ws, FigureId::CheckpointSweep, &[]).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64() + h.pretrain_secs;
    let rows = csv(&out.dir.join("checkpoint_sweep.csv"));
    ensure!(rows.len() == 6, "{} checkpoints", rows.len());
    let epochs: Vec<f64> = rows.iter().map(|r| num(r, "ckpt_epoch")).collect();
    let speeds: Vec<f64> = rows.iter().map(|r| num(r, "optimization_speed")).collect();
    let rho = pearson(&ranks(&epochs), &ranks(&speeds));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.dir.join("checkpoint_sweep_summary.json")).unwrap()).unwrap();
    let reported = summary["spearman_epoch_vs_speed"].as_f64().ok_or("no spearman in summary")?;
    let measured = format!("epochs {epochs:?}, speeds {:?}, spearman {rho:.3}, {secs:.0}s", speeds.iter().map(|s| (s * 1e3).round() / 1e3).collect::<Vec<_>>());
    ensure!((reported - rho).abs() < 1e-9, "summary spearman {reported} vs {rho}");
    ensure!(rho > 0.0, "no positive trend: {measured}");
    ensure!((rho - PINNED_SPEARMAN).abs() <= 0.2, "drifted from pinned {PINNED_SPEARMAN}: {measured}");
    ensure!(secs < 900.0, "too slow: {measured}");
    Ok(measured)
}

// ---- 7: block shuffle ----------------------------------------------------

fn shuffle_invariants() -> Outcome {
    let mut rng = Mix(7);
    let (size, ch) = (16, 3);
    let img: Vec<f32> = (0..size * size * ch).map(|_| rng.sym() as f32).collect();
    let mut sorted_in = img.clone();
    sorted_in.sort_by(f32::total_cmp);
    for block in BlockSize::SWEEP {
        for index in 0..5 {
            let spec = ShuffleSpec::new(block, 21);
            let out = block_shuffle_slice(&img, size, ch, &spec, index).map_err(|e| e.to_string())?;
            let mut sorted_out = out.clone();
            sorted_out.sort_by(f32::total_cmp);
            ensure!(sorted_out == sorted_in, "block {block}, index {index}: values not preserved");
            if block == BlockSize::Size(16) {
                ensure!(out == img, "block 16 is not the identity");
            }
            if let BlockSize::Size(b) = block {
                // Every output block is some input block, intact.
                let tile = |v: &[f32], by: usize, bx: usize| -> Vec<f32> {
                    (0..b).flat_map(|r| v[((by * b + r) * size + bx * b) * ch..((by * b + r) * size + bx * b + b) * ch].to_vec()).collect()
                };
                let per = size / b;
                let inputs: Vec<Vec<f32>> = (0..per * per).map(|t| tile(&img, t / per, t % per)).collect();
                for t in 0..per * per {
                    ensure!(inputs.contains(&tile(&out, t / per, t % per)), "block {block}: output tile {t} is not an input tile");
                }
            }
        }
    }
    for _ in 0..10 {
        let a_pt = 0.05 + 0.95 * rng.unit();
        let a_rit = rng.unit();
        let got = relative_accuracy_drop(a_pt, a_rit).map_err(|e| e.to_string())?;
        let want = (a_pt - a_rit) / a_pt * 100.0;
        ensure!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "drop({a_pt}, {a_rit}) = {got}, expected {want}");
    }
    Ok("multiset preserved for all sizes and star, 16 is identity, 10 drop checks".into())
}

// ---- 8: criticality closed form -------------------------------------------

fn criticality_closed_form() -> Outcome {
    let alphas = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let sigmas = vec![0.02, 0.05, 0.15, 0.25, 0.5];
    let expected = |a: f64, s: f64| (a - 1.0).powi(2) + s * s;
    let loss = (1, |w: &[f64]| ((w[0] - 1.0).powi(2), (w[0] - 1.0).powi(2)));
    let path = ModulePath::direct(vec![0.0], vec![1.0]).map_err(|e| e.to_string())?;
    let mut mus = Vec::new();
    for eps in [0.01, 0.05, 0.1] {
        let cfg = CriticalityConfig {
            alpha_grid: alphas.clone(),
            sigma_grid: sigmas.clone(),
            noise_samples: 4000,
            epsilon: eps,
            noise_mode: NoiseMode::PerElement,
            seed: 5,
        };
        let map = criticality_map("w", &path, &loss, &cfg).map_err(|e| e.to_string())?;
        for c in &map.cells {
            let want = expected(c.alpha, c.sigma);
            ensure!((c.train_loss - want).abs() <= 3.0 * c.train_stderr, "cell α={} σ={}: {} ± {} vs {want}", c.alpha, c.sigma, c.train_loss, c.train_stderr);
            ensure!(c.feasible == (want <= eps), "cell α={} σ={} feasibility at ε={eps} differs from the exact loss", c.alpha, c.sigma);
        }
        let exact = alphas
            .iter()
            .flat_map(|&a| sigmas.iter().map(move |&s| (a, s)))
            .filter(|&(a, s)| expected(a, s) <= eps)
            .map(|(a, s)| a * a / (s * s))
            .fold(f64::INFINITY, f64::min);
        ensure!(close(map.mu, exact, 1e-12), "ε={eps}: μ {} vs exact {exact}", map.mu);
        ensure!(close(map.mu_at(eps), exact, 1e-12), "ε={eps}: mu_at {} vs exact {exact}", map.mu_at(eps));
        mus.push(map.mu);
    }
    ensure!(mus.windows(2).all(|w| w[0] >= w[1]), "μ not monotone in ε: {mus:?}");
    Ok(format!("μ at ε = 0.01, 0.05, 0.1: {:.2}, {:.2}, {:.2}", mus[0], mus[1], mus[2]))
}

// ---- 10: determinism and persistence ---------------------------------------

const SMALL: &str = r#"
[train]
pretrain_epochs = 3
pretrain_lr_schedule = [[0, 0.05]]
finetune_epochs = 3
finetune_lr_schedule = [[0, 0.05]]
finetune_checkpoints = [1, 2]

[data]
n_train = 200
n_test = 100

[interpolate]
grid = "0:1:5"
extrapolate_grid = "-1:2:7"

[basin]
samples = 100
eval_examples = 50

[criticality]
alpha_points = 3
sigma_points = 2
noise_samples = 2
eval_examples = 50

[similarity]
max_examples = 100

[sweep]
checkpoint_epochs = [0, 1, 2, 3]
finetune_epochs = 2
block_sizes = ["16", "star"]
"#;

/// Runs pretrain and `figures` in a fresh directory; returns every manifest's output digests.
fn run_bundle(root: &Path, config: ExperimentConfig, jobs: usize, figures: &[FigureId]) -> Result<Vec<(String, Vec<(PathBuf, String)>)>, String> {
    let ws = Workspace::new(root.join("out"), None, config);
    with_jobs(jobs, || {
        let mut out = vec![("pretrain".to_string(), commands::pretrain(&ws, &[]).map_err(|e| e.to_string())?)];
        for &f in figures {
            out.push((f.as_str().to_string(), run_figure(&ws, f, &[]).map_err(|e| e.to_string())?.manifest));
        }
        out.into_iter().map(|(name, m)| Ok((name, bundle_digests(&m).map_err(|e| e.to_string())?))).collect()
    })
}

fn determinism_and_persistence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ExperimentConfig::parse(SMALL).map_err(|e| e.to_string())?;
    let serial = run_bundle(&tmp.path().join("serial"), config, 1, &FigureId::ALL)?;
    let parallel = run_bundle(
        &tmp.path().join("parallel"),
        ExperimentConfig::parse(SMALL).map_err(|e| e.to_string())?,
        4,
        &FigureId::ALL,
    )?;
    let files: usize = serial.iter().map(|(_, d)| d.len()).sum();
    for ((name, a), (_, b)) in serial.iter().zip(&parallel) {
        ensure!(!a.is_empty(), "{name} lists no outputs");
        ensure!(a == b, "{name}: --jobs 4 outputs differ from serial");
    }

    // Rebuild the config from a written manifest and rerun elsewhere.
    let manifest_path = tmp.path().join("serial/out/figure-barrier.manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let replay: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).map_err(|e| e.to_string())?;
    let rerun = run_bundle(&tmp.path().join("replay"), replay, 0, &[FigureId::Barrier])?;
    for (name, digests) in &rerun {
        let original = &serial.iter().find(|(n, _)| n == name).ok_or("missing bundle")?.1;
        ensure!(digests == original, "{name}: rerun from manifest differs");
    }

    // Checkpoint round trip, bit for bit.
    let src = tmp.path().join("serial/out/pretrain/final.llck");
    let ckpt = load_checkpoint(&src).map_err(|e| e.to_string())?;
    let copy = tmp.path().join("copy.llck");
    save_checkpoint(&ckpt, &copy).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&src).unwrap() == std::fs::read(&copy).unwrap(), "re-saved checkpoint bytes differ");
    let back = decode_checkpoint(&encode_checkpoint(&ckpt).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(back.params.values.iter().zip(&ckpt.params.values).all(|(a, b)| a.to_bits() == b.to_bits()), "parameters changed in round trip");
    ensure!(back.arch == ckpt.arch && back.params.index == ckpt.params.index, "metadata changed in round trip");
    Ok(format!("{} bundles / {files} files identical across serial, --jobs 4 and manifest replay; checkpoint round trip exact", serial.len()))
}

// ---- driver --------------------------------------------------------------

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut slot: Option<Heavy> = None;
    let criteria: Vec<(usize, &str, Box<dyn FnMut(&mut Option<Heavy>) -> Outcome>)> = vec![
        (1, "conv spectrum equals dense SVD", Box::new(|_| spectrum_matches_dense_svd())),
        (2, "gradients match finite differences", Box::new(|_| gradients_match_finite_differences())),
        (3, "linear CKA invariances and Gram form", Box::new(|_| cka_properties())),
        (4, "mistake ratio examples", Box::new(|_| mistake_ratio_examples())),
        (5, "basin estimates match closed forms", Box::new(|_| basin_matches_oracles())),
        (6, "pre-trained pairs have the lowest barrier", Box::new(barrier_ordering)),
        (7, "block shuffle invariants", Box::new(|_| shuffle_invariants())),
        (8, "criticality closed form", Box::new(|_| criticality_closed_form())),
        (9, "later checkpoints fine-tune faster", Box::new(checkpoint_sweep_trend)),
        (10, "determinism and checkpoint persistence", Box::new(|_| determinism_and_persistence())),
    ];
    let mut failed = 0;
    for (id, name, mut check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut slot))).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
