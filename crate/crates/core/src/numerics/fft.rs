//! Radix-2 complex FFT in one and two dimensions.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        ComplexMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn from_real(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Size(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        Ok(ComplexMatrix { n, data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.n + col] = v;
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Size(format!("FFT size must be a power of two, got {n}")));
    }
    Ok(())
}

/// In-place iterative Cooley–Tukey. `inverse` flips the twiddle sign; no scaling.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn transform2(input: &ComplexMatrix, inverse: bool) -> Result<ComplexMatrix> {
    let n = input.n;
    check_size(n)?;
    if input.data.len() != n * n {
        return Err(Error::Size(format!("matrix data has {} entries, expected {}", input.data.len(), n * n)));
    }
    let mut out = input.clone();
    for row in out.data.chunks_mut(n) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = out.data[r * n + c];
        }
        fft_in_place(&mut col, inverse);
        for r in 0..n {
            out.data[r * n + c] = col[r];
        }
    }
    Ok(out)
}

/// Unnormalized 2-D DFT: `X[u,v] = Σ x[r,c]·exp(-2πi(ur + vc)/n)`.
pub fn fft2(input: &ComplexMatrix) -> Result<ComplexMatrix> {
    transform2(input, false)
}

/// Unnormalized inverse; `inverse_fft2(fft2(x)) == n²·x`.
pub fn inverse_fft2(input: &ComplexMatrix) -> Result<ComplexMatrix> {
    transform2(input, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn naive_dft(x: &ComplexMatrix) -> ComplexMatrix {
        let n = x.n;
        let mut out = ComplexMatrix::zeros(n);
        for u in 0..n {
            for v in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    for c in 0..n {
                        let ang = -2.0 * std::f64::consts::PI * ((u * r + v * c) % n) as f64 / n as f64;
                        acc += x.get(r, c) * Complex64::from_polar(1.0, ang);
                    }
                }
                out.set(u, v, acc);
            }
        }
        out
    }

    fn random(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = RngStream::new(seed, 0);
        ComplexMatrix {
            n,
            data: (0..n * n).map(|_| Complex64::new(rng.next_normal(), rng.next_normal())).collect(),
        }
    }

    fn rel_frobenius(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        let num: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.data.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn zeros_stay_zero() {
        let out = fft2(&ComplexMatrix::zeros(4)).unwrap();
        assert!(out.data.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_gives_ones() {
        let mut x = ComplexMatrix::zeros(4);
        x.set(0, 0, Complex64::new(1.0, 0.0));
        let out = fft2(&x).unwrap();
        for c in out.data {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft() {
        for (i, n) in [1usize, 2, 4, 8, 16].into_iter().enumerate() {
            let x = random(n, 100 + i as u64);
            let err = rel_frobenius(&fft2(&x).unwrap(), &naive_dft(&x));
            assert!(err < 1e-5, "n={n}: {err}");
        }
    }

    #[test]
    fn inverse_scales_by_n_squared() {
        let x = random(8, 3);
        let back = inverse_fft2(&fft2(&x).unwrap()).unwrap();
        let scaled = ComplexMatrix { n: 8, data: x.data.iter().map(|c| c * 64.0).collect() };
        assert!(rel_frobenius(&back, &scaled) < 1e-5);
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(fft2(&ComplexMatrix::zeros(3)).is_err());
        assert!(fft2(&ComplexMatrix::zeros(0)).is_err());
    }
}
