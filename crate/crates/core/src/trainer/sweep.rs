use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::train_from;
use super::Checkpoint;
use crate::dataops::Dataset;
use crate::error::{domain, Error, Result};
use crate::exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ckpt_epoch: usize,
    pub final_test_acc: f64,
    pub optimization_speed: f64,
}

/// One fine-tune per pre-training checkpoint, run in parallel.
pub fn checkpoint_sweep(
    ckpts: &[Checkpoint],
    finetune: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<Vec<SweepRow>> {
    if let Some(c) = ckpts.iter().find(|c| c.arch != finetune.arch) {
        return domain(format!("checkpoint from epoch {} has a different architecture", c.meta.epoch));
    }
    if finetune.epochs == 0 {
        return domain("fine-tuning needs at least one epoch");
    }
    exec::try_map_indexed(ckpts.len(), |i| {
        let out = train_from(finetune, ckpts[i].params.clone(), train_set, test_set)?;
        Ok(SweepRow {
            ckpt_epoch: ckpts[i].meta.epoch,
            final_test_acc: out.record.final_metrics().test_acc,
            optimization_speed: out.record.optimization_speed.expect("at least one epoch"),
        })
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Size("spearman needs two equal-length series of at least 2".into()));
    }
    crate::similarity::pearson(&ranks(x), &ranks(y)).map(|p| p.r)
}
