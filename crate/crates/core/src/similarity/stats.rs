use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided, from Student's t with n − 2 degrees of freedom; NaN when n < 3.
    pub p_value: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Size("pearson needs two equal-length series of at least 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p_value = if x.len() < 3 {
        f64::NAN
    } else if r.abs() == 1.0 {
        0.0
    } else {
        let dof = n - 2.0;
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Pearson { r, p_value })
}

/// Correlation between per-class accuracy and class size.
pub fn class_size_correlation(per_class_acc: &[f64], class_sizes: &[f64]) -> Result<Pearson> {
    if per_class_acc.len() < 3 {
        return Err(Error::Domain("class-size correlation needs at least 3 classes".into()));
    }
    pearson(per_class_acc, class_sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_reference() {
        // r = 0.5, n = 10: t = 0.5·√(8/0.75) = 1.63299; two-sided p ≈ 0.14111.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let p = pearson(&x, &x).unwrap();
        assert_eq!(p.r, 1.0);
        assert_eq!(p.p_value, 0.0);
        let t: f64 = 0.5 * (8.0f64 / 0.75).sqrt();
        let dist = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((2.0 * dist.cdf(-t) - 0.14111).abs() < 1e-4);
    }

    #[test]
    fn zero_variance_is_undefined() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(class_size_correlation(&[0.5, 0.6], &[1.0, 2.0]).is_err());
    }
}
