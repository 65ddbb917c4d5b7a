use serde::{Deserialize, Serialize};

use crate::dataops::Dataset;
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::model::net::Compiled;
use crate::model::{ArchDescriptor, ParamVector};

/// Fixed chunk size, so reductions never depend on the worker count.
const CHUNK: usize = 250;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub predictions: Vec<usize>,
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and accuracy over the whole dataset.
pub fn evaluate(params: &ParamVector, arch: &ArchDescriptor, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return domain("cannot evaluate on an empty dataset");
    }
    if data.num_classes != arch.num_classes {
        return domain(format!(
            "dataset has {} classes, architecture has {}",
            data.num_classes, arch.num_classes
        ));
    }
    let net = Compiled::new(params, arch)?;
    evaluate_compiled(&net, data)
}

pub(crate) fn evaluate_compiled(net: &Compiled, data: &Dataset) -> Result<Evaluation> {
    let n = data.len();
    let row = data.images.row_len();
    let c = net.num_classes;
    let chunks = n.div_ceil(CHUNK);
    let parts = exec::map_indexed(chunks, |ci| {
        let lo = ci * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let x: Vec<f64> = data.images.data()[lo * row..hi * row].iter().map(|&v| v as f64).collect();
        let logits = net.logits(&x, hi - lo);
        let mut loss = 0.0;
        let mut preds = Vec::with_capacity(hi - lo);
        for (z, &y) in logits.chunks_exact(c).zip(&data.labels[lo..hi]) {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - z[y];
            preds.push(argmax(z));
        }
        (loss, preds)
    });
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(n);
    for (l, p) in parts {
        total += l;
        predictions.extend(p);
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { context: "evaluation".into() });
    }
    let mut hits = vec![0usize; c];
    let mut counts = vec![0usize; c];
    for (&p, &y) in predictions.iter().zip(&data.labels) {
        counts[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let accuracy = hits.iter().sum::<usize>() as f64 / n as f64;
    let per_class_accuracy =
        hits.iter().zip(&counts).map(|(&h, &k)| if k == 0 { 0.0 } else { h as f64 / k as f64 }).collect();
    Ok(Evaluation { loss, accuracy, per_class_accuracy, predictions })
}
