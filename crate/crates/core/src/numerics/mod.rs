//! Low-level numerics: dense tensors, FFT, small-matrix SVD and random streams.

pub mod fft;
pub mod rng;
pub mod svd;
pub mod tensor;

pub use fft::{fft2, inverse_fft2, ComplexMatrix};
pub use rng::{gaussian, uniform_in_ball, RngStream};
pub use svd::{svd_values, svd_values_complex, Matrix};
pub use tensor::Tensor;

/// Dot product with 64-bit accumulation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
