//! Singular values by one-sided (Hestenes) Jacobi rotations.

use num_complex::Complex64;

use crate::error::{domain, Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Size(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Size(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(out)
    }
}

const MAX_SWEEPS: usize = 60;

/// Orthogonalizes the columns in place; returns their norms.
fn hestenes(mut cols: Vec<Vec<f64>>) -> Vec<f64> {
    let n = cols.len();
    let scale: f64 = cols.iter().flatten().map(|x| x * x).sum::<f64>();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (x, y) in cp.iter().zip(cq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                // Negligible columns relative to the whole matrix need no rotation.
                if alpha.min(beta) <= 1e-300 * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let a = *x;
                    let b = *y;
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

/// Singular values of `m`, descending, `min(rows, cols)` of them.
pub fn svd_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.data.iter().any(|x| !x.is_finite()) {
        return domain("svd_values: matrix has non-finite entries");
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(Vec::new());
    }
    // Rotate the shorter side so that the column count is min(rows, cols).
    let work = if m.rows >= m.cols { m.clone() } else { m.transpose() };
    let cols: Vec<Vec<f64>> =
        (0..work.cols).map(|c| (0..work.rows).map(|r| work.get(r, c)).collect()).collect();
    let mut values = hestenes(cols);
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Singular values of a complex `rows×cols` matrix (row-major), descending.
///
/// Uses the real embedding `[[Re, -Im], [Im, Re]]`, whose spectrum is the
/// complex spectrum with every value doubled in multiplicity.
pub fn svd_values_complex(rows: usize, cols: usize, data: &[Complex64]) -> Result<Vec<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Size(format!("{} values for a {rows}x{cols} matrix", data.len())));
    }
    let mut real = Matrix::zeros(2 * rows, 2 * cols);
    for r in 0..rows {
        for c in 0..cols {
            let z = data[r * cols + c];
            real.set(r, c, z.re);
            real.set(r, c + cols, -z.im);
            real.set(r + rows, c, z.im);
            real.set(r + rows, c + cols, z.re);
        }
    }
    let doubled = svd_values(&real)?;
    Ok(doubled.into_iter().step_by(2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed, 1);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.next_normal()).collect()).unwrap()
    }

    /// Classical two-sided Jacobi eigenvalue iteration for symmetric matrices.
    fn jacobi_eigenvalues(mut a: Matrix) -> Vec<f64> {
        let n = a.rows;
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.get(i, j).powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        (0..n).map(|i| a.get(i, i)).collect()
    }

    #[test]
    fn identity_values() {
        assert_eq!(svd_values(&Matrix::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn embedded_diagonal() {
        let m = Matrix::new(2, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(svd_values(&m).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn matches_eigenvalues_of_gram() {
        let m = random(5, 4, 17);
        let gram = m.transpose().matmul(&m).unwrap();
        let mut expected: Vec<f64> =
            jacobi_eigenvalues(gram).into_iter().map(|e| e.max(0.0).sqrt()).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let got = svd_values(&m).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-9 * e.max(1.0), "{g} vs {e}");
        }
    }

    #[test]
    fn energy_and_transpose_invariance() {
        for seed in 0..10 {
            let m = random(3 + seed as usize % 4, 2 + seed as usize % 5, seed);
            let s = svd_values(&m).unwrap();
            let energy: f64 = s.iter().map(|x| x * x).sum();
            assert!((energy - m.frobenius_sq()).abs() <= 1e-4 * m.frobenius_sq());
            let st = svd_values(&m.transpose()).unwrap();
            for (a, b) in s.iter().zip(&st) {
                assert!((a - b).abs() < 1e-6);
            }
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = Matrix::new(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(svd_values(&m).is_err());
    }

    #[test]
    fn complex_unitary_scaling() {
        // i·I has all singular values 1.
        let data = vec![
            Complex64::new(0.0, 2.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 2.0),
        ];
        let s = svd_values_complex(2, 2, &data).unwrap();
        assert_eq!(s.len(), 2);
        for v in s {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }
}
