use super::params::ParamVector;
use crate::error::{domain, Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay:
/// `buf ← momentum·buf + grad + weight_decay·params`, `params ← params − lr·buf`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub buffer: Vec<f64>,
}

impl Sgd {
    pub fn new(len: usize, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return domain(format!("momentum must be in [0, 1), got {momentum}"));
        }
        if !(weight_decay >= 0.0) {
            return domain(format!("weight decay must be >= 0, got {weight_decay}"));
        }
        Ok(Sgd { momentum, weight_decay, buffer: vec![0.0; len] })
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f32], grad: &[f64], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return domain(format!("learning rate must be > 0, got {lr}"));
        }
        if grad.len() != params.len() || self.buffer.len() != params.len() {
            return Err(Error::Size("parameter, gradient and momentum lengths differ".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training("non-finite gradient".into()));
        }
        for ((p, &g), b) in params.iter_mut().zip(grad).zip(self.buffer.iter_mut()) {
            let pv = *p as f64;
            *b = self.momentum * *b + g + self.weight_decay * pv;
            *p = (pv - lr * *b) as f32;
        }
        Ok(())
    }
}

/// Functional form of one SGD step; returns the updated parameters and momentum buffer.
pub fn sgd_step(
    params: &ParamVector,
    grad: &ParamVector,
    lr: f64,
    momentum_buf: &[f64],
    momentum: f64,
    weight_decay: f64,
) -> Result<(ParamVector, Vec<f64>)> {
    params.check_same_layout(grad)?;
    let mut opt = Sgd::new(params.len(), momentum, weight_decay)?;
    if momentum_buf.len() != params.len() {
        return Err(Error::Size("momentum buffer length differs from parameters".into()));
    }
    opt.buffer.copy_from_slice(momentum_buf);
    let mut next = params.clone();
    opt.step(&mut next.values, &grad.to_f64(), lr)?;
    Ok((next, opt.buffer))
}
