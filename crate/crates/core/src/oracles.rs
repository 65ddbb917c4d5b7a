//! Slow reference computations used to check the fast paths.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// The explicit `(n²·Cout) × (n²·Cin)` matrix of the stride-1 circular
/// convolution used by the model: `out[y, x, co] = Σ in[(y+ky−k/2) mod n, (x+kx−k/2) mod n, ci] · K[ky, kx, ci, co]`.
pub fn materialized_conv(kernel: &[f64], k: usize, cin: usize, cout: usize, n: usize) -> Result<Matrix> {
    if kernel.len() != k * k * cin * cout {
        return Err(Error::Size("kernel length mismatch".into()));
    }
    let pad = k / 2;
    let mut m = Matrix::zeros(n * n * cout, n * n * cin);
    for y in 0..n {
        for x in 0..n {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (y + ky + n * k - pad) % n;
                    let ix = (x + kx + n * k - pad) % n;
                    for ci in 0..cin {
                        for co in 0..cout {
                            let r = (y * n + x) * cout + co;
                            let c = (iy * n + ix) * cin + ci;
                            let v = m.get(r, c) + kernel[((ky * k + kx) * cin + ci) * cout + co];
                            m.set(r, c, v);
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn power_iteration_norm(m: &Matrix, iterations: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 0);
    let mut v: Vec<f64> = (0..m.cols).map(|_| rng.next_normal()).collect();
    let mut sigma = 0.0;
    for _ in 0..iterations {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut u = vec![0.0; m.rows];
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = (0..m.cols).map(|c| m.get(r, c) * v[c]).sum();
        }
        sigma = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = vec![0.0; m.cols];
        for (r, &ur) in u.iter().enumerate() {
            for (c, wc) in w.iter_mut().enumerate() {
                *wc += m.get(r, c) * ur;
            }
        }
        v = w;
    }
    sigma
}
