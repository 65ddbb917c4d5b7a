use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cka {
    pub value: f64,
    /// Set when either centered input is all zero; `value` is then 0.
    pub degenerate: bool,
}

fn centered(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for c in 0..m.cols {
        let mean = (0..m.rows).map(|r| m.get(r, c)).sum::<f64>() / m.rows as f64;
        for r in 0..m.rows {
            out.set(r, c, m.get(r, c) - mean);
        }
    }
    out
}

/// `aᵀb` for row-major `a (n×p)`, `b (n×q)`.
fn cross(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; a.cols * b.cols];
    for r in 0..a.rows {
        let ar = &a.data[r * a.cols..(r + 1) * a.cols];
        let br = &b.data[r * b.cols..(r + 1) * b.cols];
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[i * b.cols..(i + 1) * b.cols].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `m mᵀ`, the `n×n` Gram matrix.
fn gram(m: &Matrix) -> Vec<f64> {
    let n = m.rows;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let ri = &m.data[i * m.cols..(i + 1) * m.cols];
        for j in 0..=i {
            let rj = &m.data[j * m.cols..(j + 1) * m.cols];
            let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Linear centered kernel alignment between two activation matrices with the same rows.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<Cka> {
    if x.rows != y.rows {
        return domain(format!("CKA inputs have {} and {} rows", x.rows, y.rows));
    }
    if x.rows < 2 {
        return domain("CKA needs at least two examples");
    }
    let xc = centered(x);
    let yc = centered(y);
    if xc.data.iter().all(|&v| v == 0.0) || yc.data.iter().all(|&v| v == 0.0) {
        return Ok(Cka { value: 0.0, degenerate: true });
    }
    let n = x.rows;
    // ‖YᵀX‖² = ⟨XXᵀ, YYᵀ⟩; pick whichever side is cheaper.
    let (num, dx, dy) = if x.cols * y.cols <= n * (x.cols + y.cols) {
        (sq(&cross(&yc, &xc)), sq(&cross(&xc, &xc)).sqrt(), sq(&cross(&yc, &yc)).sqrt())
    } else {
        let gx = gram(&xc);
        let gy = gram(&yc);
        (gx.iter().zip(&gy).map(|(a, b)| a * b).sum(), sq(&gx).sqrt(), sq(&gy).sqrt())
    };
    Ok(Cka { value: num / (dx * dy), degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random(rng: &mut RngStream, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.next_normal()).collect()).unwrap()
    }

    #[test]
    fn both_evaluation_orders_agree() {
        let mut rng = RngStream::new(4, 1);
        // 6×40 takes the Gram branch, 40×6 the feature branch.
        let a = random(&mut rng, 6, 40);
        let b = random(&mut rng, 6, 30);
        let wide = linear_cka(&a, &b).unwrap().value;
        let g = {
            let (xa, xb) = (centered(&a), centered(&b));
            let num = sq(&cross(&xb, &xa));
            num / (sq(&cross(&xa, &xa)).sqrt() * sq(&cross(&xb, &xb)).sqrt())
        };
        assert!((wide - g).abs() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        let x = Matrix::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let y = Matrix::new(3, 1, vec![0.0, 1.0, 5.0]).unwrap();
        let c = linear_cka(&x, &y).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
        assert!(linear_cka(&x, &Matrix::zeros(4, 1)).is_err());
    }
}
