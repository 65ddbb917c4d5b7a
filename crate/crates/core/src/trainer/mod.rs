//! Pre-training and fine-tuning runs with checkpoints and learning curves.
//!
//! The four regimes are all instances of [`train`]: random or checkpoint
//! initialization, on source or target data.

mod config;
pub(crate) mod eval;
mod run;
mod sweep;

pub use config::{DataSpec, Init, TrainConfig};
pub use eval::{argmax, evaluate, Evaluation};
pub use run::{resume, train, train_from, EpochMetrics, RunRecord, TrainOutput};
pub use sweep::{checkpoint_sweep, spearman, SweepRow};

use serde::{Deserialize, Serialize};

use crate::model::{ArchDescriptor, ParamVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub config_hash: String,
    /// Digest of the batch-order stream state for the next epoch.
    pub rng_digest: String,
    /// Best test accuracy among the run's saved checkpoints (earliest on ties).
    pub is_best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: ArchDescriptor,
    pub params: ParamVector,
    pub meta: CheckpointMeta,
}
