use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataops::{generate_cached, shuffle_dataset, Dataset, DomainId, DomainSpec, ShuffleSpec, Split};
use crate::error::{domain, Result};
use crate::model::ArchDescriptor;

/// Which images a run trains and evaluates on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    /// Domains concatenated in order, each generated with its own seed.
    pub domains: Vec<(DomainId, u64)>,
    /// Training examples per domain.
    pub n_train: usize,
    /// Test examples per domain.
    pub n_test: usize,
    /// Applied to both splits.
    pub shuffle: Option<ShuffleSpec>,
}

impl DataSpec {
    pub fn single(domain: DomainId, seed: u64) -> Self {
        DataSpec { domains: vec![(domain, seed)], n_train: 2000, n_test: 1000, shuffle: None }
    }

    /// Train and test splits, optionally read from and written to a cache directory.
    pub fn load(&self, cache_dir: Option<&std::path::Path>) -> Result<(Dataset, Dataset)> {
        if self.domains.is_empty() {
            return domain("data spec lists no domains");
        }
        let split = |split: Split, n: usize| -> Result<Dataset> {
            let parts = self
                .domains
                .iter()
                .map(|&(d, seed)| generate_cached(cache_dir, &DomainSpec::new(d), split, n, seed))
                .collect::<Result<Vec<_>>>()?;
            let ds = Dataset::concat(&parts)?;
            Ok(match &self.shuffle {
                Some(spec) => shuffle_dataset(&ds, spec)?,
                None => ds,
            })
        };
        Ok((split(Split::Train, self.n_train)?, split(Split::Test, self.n_test)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Random { seed: u64 },
    FromCheckpoint { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchDescriptor,
    pub data: DataSpec,
    pub epochs: usize,
    pub batch_size: usize,
    /// `(first epoch, lr)` pairs; epochs are zero-based and strictly increasing from 0.
    pub lr_schedule: Vec<(usize, f64)>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Seeds the batch-order stream only.
    pub seed: u64,
    pub init: Init,
    /// Epochs (0 = before training) at which to save a checkpoint; the final epoch is always saved.
    pub checkpoint_epochs: Vec<usize>,
}

impl TrainConfig {
    /// Fine-tuning defaults: 60 epochs, lr 0.05 dropping to 0.005 at epoch 30.
    pub fn finetune(data: DataSpec, init: Init, seed: u64) -> Self {
        TrainConfig {
            arch: ArchDescriptor::tiny4(),
            data,
            epochs: 60,
            batch_size: 64,
            lr_schedule: vec![(0, 0.05), (30, 0.005)],
            momentum: 0.9,
            weight_decay: 1e-4,
            seed,
            init,
            checkpoint_epochs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batch_size == 0 {
            return domain("batch_size must be positive");
        }
        let total_train = self.data.n_train * self.data.domains.len();
        if self.batch_size > total_train {
            return domain(format!("batch_size {} exceeds the {total_train} training examples", self.batch_size));
        }
        match self.lr_schedule.first() {
            Some(&(0, _)) => {}
            _ => return domain("lr schedule must start at epoch 0"),
        }
        if self.lr_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return domain("lr schedule epochs must be strictly increasing");
        }
        if self.lr_schedule.iter().any(|&(_, lr)| !(lr.is_finite() && lr > 0.0)) {
            return domain("learning rates must be finite and positive");
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return domain("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return domain("weight_decay must be finite and non-negative");
        }
        if let Some(&e) = self.checkpoint_epochs.iter().find(|&&e| e > self.epochs) {
            return domain(format!("checkpoint epoch {e} is beyond the {} training epochs", self.epochs));
        }
        Ok(())
    }

    /// Learning rate in effect during zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule.iter().take_while(|&&(e, _)| e <= epoch).last().map_or(0.0, |&(_, lr)| lr)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
