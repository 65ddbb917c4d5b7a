//! Exact singular values of circular convolutions and dense layers.
//!
//! A circular 2-D convolution is block-diagonalized by the 2-D DFT: at each of
//! the n² frequencies it acts as a Cout×Cin complex matrix, and the operator's
//! singular values are the union of those matrices' singular values.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec;
use crate::model::{ArchDescriptor, LayerKind, ParamVector};
use crate::numerics::{fft2, svd_values, svd_values_complex, ComplexMatrix, Matrix};
use crate::persistence::{Cell, ColumnKind, Table};

/// Singular values of the stride-1 circular convolution with `kernel`
/// (`k×k×Cin×Cout`, row-major) on an `n×n` grid, sorted descending.
pub fn conv_singular_values(kernel: &[f64], k: usize, cin: usize, cout: usize, n: usize) -> Result<Vec<f64>> {
    if kernel.len() != k * k * cin * cout {
        return Err(Error::Size(format!("kernel has {} values, expected {k}x{k}x{cin}x{cout}", kernel.len())));
    }
    if k > n {
        return domain(format!("kernel size {k} exceeds grid size {n}"));
    }
    if !n.is_power_of_two() {
        return domain(format!("grid size {n} is not a power of two"));
    }
    // hats[ci * cout + co]: DFT of the zero-padded kernel slice.
    let hats = exec::try_map_indexed(cin * cout, |s| {
        let (ci, co) = (s / cout, s % cout);
        let mut padded = ComplexMatrix::zeros(n);
        for ky in 0..k {
            for kx in 0..k {
                let w = kernel[((ky * k + kx) * cin + ci) * cout + co];
                padded.set(ky, kx, Complex64::new(w, 0.0));
            }
        }
        fft2(&padded)
    })?;
    let per_freq = exec::try_map_indexed(n * n, |f| {
        let (u, v) = (f / n, f % n);
        let mut block = vec![Complex64::new(0.0, 0.0); cout * cin];
        for co in 0..cout {
            for ci in 0..cin {
                block[co * cin + ci] = hats[ci * cout + co].get(u, v);
            }
        }
        svd_values_complex(cout, cin, &block)
    })?;
    let mut all: Vec<f64> = per_freq.into_iter().flatten().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    Ok(all)
}

/// Counts of values strictly below each threshold.
pub fn threshold_count_curve(values: &[f64], thresholds: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if thresholds.windows(2).all(|w| w[0] <= w[1]) {
        let mut i = 0;
        thresholds
            .iter()
            .map(|&t| {
                while i < sorted.len() && sorted[i] < t {
                    i += 1;
                }
                (t, i)
            })
            .collect()
    } else {
        thresholds.iter().map(|&t| (t, sorted.iter().filter(|&&v| v < t).count())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpectrum {
    pub name: String,
    /// Grid size for convolutions; `None` for dense layers.
    pub grid: Option<usize>,
    pub values: Vec<f64>,
}

impl ModuleSpectrum {
    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn spectral(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub modules: Vec<ModuleSpectrum>,
    /// All modules' values, sorted descending.
    pub all: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
    pub note: String,
}

pub const HISTOGRAM_BINS: usize = 64;

pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 / bins as f64 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { lo: i as f64 * width, hi: (i + 1) as f64 * width, count })
        .collect()
}

/// Per-module spectra of a network; strided convolutions are treated as
/// stride-1 operators on their input grid.
pub fn network_spectrum(params: &ParamVector, arch: &ArchDescriptor) -> Result<SpectrumReport> {
    if params.index != ParamVector::index_for(arch) {
        return domain("parameters do not match the architecture");
    }
    let layers = arch.layers();
    let modules = exec::try_map_indexed(layers.len(), |i| {
        let layer = &layers[i];
        let w: Vec<f64> = params.values[params.index[i].weight_range()].iter().map(|&v| v as f64).collect();
        match layer.kind {
            LayerKind::Conv(g) => {
                if g.height != g.width {
                    return domain("spectra need square inputs");
                }
                let values = conv_singular_values(&w, g.kernel, g.in_channels, g.out_channels, g.height)?;
                Ok(ModuleSpectrum { name: layer.name.clone(), grid: Some(g.height), values })
            }
            LayerKind::Dense { inputs, outputs, .. } => {
                let values = svd_values(&Matrix::new(inputs, outputs, w)?)?;
                Ok(ModuleSpectrum { name: layer.name.clone(), grid: None, values })
            }
        }
    })?;
    let mut all: Vec<f64> = modules.iter().flat_map(|m| m.values.iter().copied()).collect();
    all.sort_by(|a, b| b.total_cmp(a));
    let histogram = histogram(&all, HISTOGRAM_BINS);
    Ok(SpectrumReport {
        modules,
        all,
        histogram,
        note: "strided convolutions analysed as stride-1 circular operators on their input grid".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTerms {
    pub per_module: Vec<(String, f64, f64)>,
    pub ratio_sum: f64,
    pub spectral_product_log: f64,
}

/// Σ ‖W‖_F/‖W‖_2 and Σ log ‖W‖_2 over modules.
pub fn norm_ratio_term(report: &SpectrumReport) -> Result<NormTerms> {
    let mut per_module = Vec::with_capacity(report.modules.len());
    for m in &report.modules {
        let spec = m.spectral();
        if !(spec > 0.0) {
            return Err(Error::ZeroSpectralNorm(m.name.clone()));
        }
        per_module.push((m.name.clone(), m.frobenius(), spec));
    }
    let ratio_sum = per_module.iter().map(|(_, f, s)| f / s).sum();
    let spectral_product_log = per_module.iter().map(|(_, _, s)| s.ln()).sum();
    Ok(NormTerms { per_module, ratio_sum, spectral_product_log })
}

impl SpectrumReport {
    pub fn values_table(&self) -> Table {
        let mut t = Table::new(&[("module", ColumnKind::Text), ("rank", ColumnKind::Int), ("sigma", ColumnKind::Real)]);
        for m in &self.modules {
            for (r, v) in m.values.iter().enumerate() {
                t.push(vec![Cell::Text(m.name.clone()), Cell::Int(r as i64 + 1), Cell::Real(*v)]);
            }
        }
        t
    }

    pub fn norms_table(&self) -> Table {
        let mut t = Table::new(&[("module", ColumnKind::Text), ("frobenius", ColumnKind::Real), ("spectral", ColumnKind::Real)]);
        for m in &self.modules {
            t.push(vec![Cell::Text(m.name.clone()), Cell::Real(m.frobenius()), Cell::Real(m.spectral())]);
        }
        t
    }

    pub fn histogram_table(&self) -> Table {
        let mut t = Table::new(&[("bin_lo", ColumnKind::Real), ("bin_hi", ColumnKind::Real), ("count", ColumnKind::Int)]);
        for b in &self.histogram {
            t.push(vec![Cell::Real(b.lo), Cell::Real(b.hi), Cell::Int(b.count as i64)]);
        }
        t
    }
}

pub fn threshold_table(curve: &[(f64, usize)]) -> Table {
    let mut t = Table::new(&[("threshold", ColumnKind::Real), ("count", ColumnKind::Int)]);
    for &(th, c) in curve {
        t.push(vec![Cell::Real(th), Cell::Int(c as i64)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::oracles::{materialized_conv, power_iteration_norm};

    fn random_kernel(rng: &mut RngStream, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.next_normal()).collect()
    }

    #[test]
    fn scalar_kernel() {
        let v = conv_singular_values(&[2.0], 1, 1, 1, 4).unwrap();
        assert_eq!(v.len(), 16);
        assert!(v.iter().all(|&s| (s - 2.0).abs() < 1e-12));
    }

    #[test]
    fn identity_kernel() {
        // Centre tap of a 3×3 kernel with identity channel mixing.
        let c = 3;
        let mut k = vec![0.0; 9 * c * c];
        for ch in 0..c {
            k[((4) * c + ch) * c + ch] = 1.0;
        }
        let v = conv_singular_values(&k, 3, c, c, 8).unwrap();
        assert_eq!(v.len(), 64 * 3);
        assert!(v.iter().all(|&s| (s - 1.0).abs() < 1e-10));
    }

    #[test]
    fn matches_materialized_operator() {
        let mut rng = RngStream::new(1, 9);
        let k = random_kernel(&mut rng, 9 * 2);
        let fast = conv_singular_values(&k, 3, 1, 2, 4).unwrap();
        let m = materialized_conv(&k, 3, 1, 2, 4).unwrap();
        assert_eq!((m.rows, m.cols), (32, 16));
        let slow = svd_values(&m).unwrap();
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn energy_scaling_and_single_channel_dft() {
        let mut rng = RngStream::new(2, 9);
        let (kk, cin, cout, n) = (3, 2, 3, 8);
        let k = random_kernel(&mut rng, kk * kk * cin * cout);
        let v = conv_singular_values(&k, kk, cin, cout, n).unwrap();
        let energy: f64 = v.iter().map(|s| s * s).sum();
        let kf: f64 = k.iter().map(|x| x * x).sum();
        assert!((energy - (n * n) as f64 * kf).abs() < 1e-4 * energy);
        let scaled: Vec<f64> = k.iter().map(|x| -2.5 * x).collect();
        let vs = conv_singular_values(&scaled, kk, cin, cout, n).unwrap();
        for (a, b) in v.iter().zip(&vs) {
            assert!((2.5 * a - b).abs() < 1e-9 * b.max(1.0));
        }
        let single = random_kernel(&mut rng, 9);
        let mut padded = ComplexMatrix::zeros(4);
        for i in 0..9 {
            padded.set(i / 3, i % 3, Complex64::new(single[i], 0.0));
        }
        let mut mags: Vec<f64> = fft2(&padded).unwrap().data.iter().map(|z| z.norm()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let sv = conv_singular_values(&single, 3, 1, 1, 4).unwrap();
        for (a, b) in mags.iter().zip(&sv) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = RngStream::new(3, 9);
        let k = random_kernel(&mut rng, 9 * 2 * 3);
        let v = conv_singular_values(&k, 3, 2, 3, 8).unwrap();
        let m = materialized_conv(&k, 3, 2, 3, 8).unwrap();
        let est = power_iteration_norm(&m, 2000, 11);
        assert!(v[0] >= est * (1.0 - 1e-9));
        assert!((v[0] - est).abs() < 1e-4 * v[0]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(conv_singular_values(&[0.0; 25], 5, 1, 1, 4).is_err());
        assert!(conv_singular_values(&[0.0; 9], 3, 1, 1, 6).is_err());
    }

    #[test]
    fn threshold_counts() {
        assert_eq!(threshold_count_curve(&[1.0, 2.0, 3.0], &[2.5]), vec![(2.5, 2)]);
        assert_eq!(threshold_count_curve(&[1.0, 2.0, 3.0], &[0.5, 3.5]), vec![(0.5, 0), (3.5, 3)]);
        let mut rng = RngStream::new(4, 9);
        let vals: Vec<f64> = (0..300).map(|_| rng.next_f64()).collect();
        let ts: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        for (t, c) in threshold_count_curve(&vals, &ts) {
            assert_eq!(c, sorted.partition_point(|&v| v < t));
        }
    }

    #[test]
    fn norm_terms() {
        let r = SpectrumReport {
            modules: vec![ModuleSpectrum { name: "m".into(), grid: None, values: vec![4.0, 3.0] }],
            all: vec![4.0, 3.0],
            histogram: Vec::new(),
            note: String::new(),
        };
        let t = norm_ratio_term(&r).unwrap();
        assert_eq!(t.per_module[0], ("m".to_string(), 5.0, 4.0));
        assert_eq!(t.ratio_sum, 1.25);
        let zero = SpectrumReport {
            modules: vec![ModuleSpectrum { name: "z".into(), grid: None, values: vec![0.0] }],
            ..r.clone()
        };
        assert!(matches!(norm_ratio_term(&zero), Err(Error::ZeroSpectralNorm(_))));
        let ident = SpectrumReport {
            modules: vec![
                ModuleSpectrum { name: "a".into(), grid: None, values: vec![1.0; 4] },
                ModuleSpectrum { name: "b".into(), grid: None, values: vec![1.0; 9] },
            ],
            ..r
        };
        let t = norm_ratio_term(&ident).unwrap();
        assert!((t.ratio_sum - 5.0).abs() < 1e-12);
        assert_eq!(t.spectral_product_log, 0.0);
    }

    #[test]
    fn tiny4_spectrum_shape() {
        let arch = ArchDescriptor::tiny4();
        let p = crate::model::init_random(&arch, &mut RngStream::new(1, 2));
        let r = network_spectrum(&p, &arch).unwrap();
        let lens: Vec<usize> = r.modules.iter().map(|m| m.values.len()).collect();
        assert_eq!(lens, [256 * 3, 256 * 8, 64 * 16, 32, 10]);
        assert_eq!(r.histogram.iter().map(|b| b.count).sum::<usize>(), r.all.len());
    }
}
