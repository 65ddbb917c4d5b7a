//! Representation and parameter-space comparisons between two models.

mod cka;
mod mistakes;
mod stats;

pub use cka::{linear_cka, Cka};
pub use mistakes::{mistake_ratios, mistake_table, GroupBy, MistakeRow, Ratio};
pub use stats::{class_size_correlation, pearson, Pearson};

use serde::{Deserialize, Serialize};

use crate::dataops::Dataset;
use crate::error::{domain, Result};
use crate::model::{forward, ArchDescriptor, ParamVector};
use crate::numerics::rng::streams;
use crate::numerics::{Matrix, RngStream};

/// Activation matrices are subsampled to at most this many examples.
pub const MAX_CKA_EXAMPLES: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDistance {
    pub per_module: Vec<(String, f64)>,
    pub total: f64,
}

/// Per-module and whole-vector Euclidean distance.
pub fn param_l2(a: &ParamVector, b: &ParamVector) -> Result<ParamDistance> {
    a.check_same_layout(b)?;
    let per_module: Vec<(String, f64)> = a
        .index
        .iter()
        .map(|e| {
            let d2: f64 = a.values[e.range()]
                .iter()
                .zip(&b.values[e.range()])
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum();
            (e.name.clone(), d2.sqrt())
        })
        .collect();
    let total = per_module.iter().map(|(_, d)| d * d).sum::<f64>().sqrt();
    Ok(ParamDistance { per_module, total })
}

/// Sorted example indices, at most `max`, drawn from a fixed stream.
pub fn subsample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx = RngStream::derive(seed, &[streams::SUBSAMPLE, n as u64]).permutation(n);
    idx.truncate(max);
    idx.sort_unstable();
    idx
}

/// Per-module activation matrices on `data`.
pub fn module_activations(params: &ParamVector, arch: &ArchDescriptor, data: &Dataset) -> Result<Vec<(String, Matrix)>> {
    let out = forward(params, arch, &data.images)?;
    out.activations
        .into_iter()
        .map(|(name, t)| {
            let (r, c, v) = t.to_matrix_f64();
            Ok((name, Matrix::new(r, c, v)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cka: Vec<(String, Cka)>,
    pub l2: ParamDistance,
    pub examples: usize,
}

/// CKA per module on a shared subsample, plus parameter distances.
pub fn compare(a: &ParamVector, b: &ParamVector, arch: &ArchDescriptor, data: &Dataset, seed: u64) -> Result<SimilarityReport> {
    if data.is_empty() {
        return domain("comparison dataset is empty");
    }
    let l2 = param_l2(a, b)?;
    let idx = subsample_indices(data.len(), MAX_CKA_EXAMPLES, seed);
    let sub = data.subset(&idx);
    let xa = module_activations(a, arch, &sub)?;
    let xb = module_activations(b, arch, &sub)?;
    let cka = xa
        .iter()
        .zip(&xb)
        .map(|((name, x), (_, y))| Ok((name.clone(), linear_cka(x, y)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityReport { cka, l2, examples: sub.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_distances() {
        let arch = ArchDescriptor::tiny4();
        let a = ParamVector::zeros(&arch);
        let mut b = a.clone();
        b.values[0] = 3.0;
        b.values[1] = 4.0;
        let last = b.len() - 1;
        b.values[last] = 12.0;
        let d = param_l2(&a, &b).unwrap();
        assert_eq!(d.per_module[0], ("conv1".to_string(), 5.0));
        assert_eq!(d.per_module[4], ("classifier".to_string(), 12.0));
        assert_eq!(d.total, 13.0);
        assert!(param_l2(&a, &a).unwrap().per_module.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn subsample_is_sorted_and_bounded() {
        let idx = subsample_indices(5000, 2048, 3);
        assert_eq!(idx.len(), 2048);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(idx, subsample_indices(5000, 2048, 3));
        assert_eq!(subsample_indices(10, 2048, 3), (0..10).collect::<Vec<_>>());
    }
}
