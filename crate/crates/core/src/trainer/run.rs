use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Init, TrainConfig};
use super::eval::evaluate_compiled;
use super::{Checkpoint, CheckpointMeta};
use crate::dataops::Dataset;
use crate::error::{domain, Error, Result};
use crate::model::net::Compiled;
use crate::model::{init_random, ParamVector, Sgd};
use crate::numerics::rng::streams;
use crate::numerics::{distance, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// One-based: metrics after this many epochs.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// ‖θ_epoch − θ_0‖.
    pub distance_to_init: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Metrics of the initial parameters.
    pub initial: EpochMetrics,
    pub epochs: Vec<EpochMetrics>,
    pub wall_time_secs: f64,
    /// Mean training accuracy over the first `speed_epochs` epochs.
    pub optimization_speed: Option<f64>,
    pub speed_epochs: usize,
}

impl RunRecord {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub final_checkpoint: Checkpoint,
    pub record: RunRecord,
    /// Requested checkpoints plus the final one, in epoch order.
    pub saved: Vec<Checkpoint>,
}

fn batch_stream(seed: u64, epoch: usize) -> RngStream {
    RngStream::derive(seed, &[streams::BATCH, epoch as u64])
}

fn rng_digest(seed: u64, next_epoch: usize) -> String {
    let s = batch_stream(seed, next_epoch);
    let json = serde_json::to_vec(&s).expect("stream serializes");
    hex::encode(Sha256::digest(&json))
}

fn initial_params(config: &TrainConfig) -> Result<ParamVector> {
    match &config.init {
        Init::Random { seed } => Ok(init_random(&config.arch, &mut RngStream::new(*seed, streams::INIT))),
        Init::FromCheckpoint { path } => {
            let ckpt = crate::persistence::load_checkpoint(path)?;
            if ckpt.arch != config.arch {
                return domain(format!(
                    "checkpoint architecture {} does not match configured architecture {}",
                    ckpt.arch.to_text(),
                    config.arch.to_text()
                ));
            }
            Ok(ckpt.params)
        }
    }
}

/// Runs `config` end to end, generating its data.
pub fn train(config: &TrainConfig) -> Result<TrainOutput> {
    train_cached(config, None)
}

pub fn train_cached(config: &TrainConfig, cache_dir: Option<&std::path::Path>) -> Result<TrainOutput> {
    config.validate()?;
    let init = initial_params(config)?;
    let (train_set, test_set) = config.data.load(cache_dir)?;
    train_from(config, init, &train_set, &test_set)
}

/// Trains from explicit initial parameters on prepared data; `config.init` is only hashed.
pub fn train_from(config: &TrainConfig, init: ParamVector, train_set: &Dataset, test_set: &Dataset) -> Result<TrainOutput> {
    run_epochs(config, init.clone(), &init, 0, train_set, test_set)
}

/// Continues a run from one of its own checkpoints. Momentum restarts from zero.
pub fn resume(config: &TrainConfig, from: &Checkpoint, initial: &ParamVector, train_set: &Dataset, test_set: &Dataset) -> Result<TrainOutput> {
    let hash = config.hash();
    if from.meta.config_hash != hash {
        return Err(Error::ConfigHashMismatch { found: from.meta.config_hash.clone(), expected: hash });
    }
    if from.arch != config.arch {
        return domain("checkpoint architecture differs from the configuration");
    }
    run_epochs(config, from.params.clone(), initial, from.meta.epoch, train_set, test_set)
}

fn metrics(net: &Compiled, epoch: usize, train_set: &Dataset, test_set: &Dataset, dist: f64) -> Result<EpochMetrics> {
    let tr = evaluate_compiled(net, train_set)?;
    let te = evaluate_compiled(net, test_set)?;
    Ok(EpochMetrics {
        epoch,
        train_loss: tr.loss,
        train_acc: tr.accuracy,
        test_loss: te.loss,
        test_acc: te.accuracy,
        distance_to_init: dist,
    })
}

fn run_epochs(
    config: &TrainConfig,
    mut params: ParamVector,
    init: &ParamVector,
    start_epoch: usize,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutput> {
    config.validate()?;
    params.check_index()?;
    if params.index != ParamVector::index_for(&config.arch) {
        return domain("initial parameters do not match the configured architecture");
    }
    for ds in [train_set, test_set] {
        if ds.num_classes != config.arch.num_classes {
            return domain("dataset class count differs from the architecture");
        }
    }
    if config.batch_size > train_set.len() {
        return domain("batch_size exceeds the training set");
    }
    let started = Instant::now();
    let hash = config.hash();
    let init64 = init.to_f64();
    let row = train_set.images.row_len();
    let n = train_set.len();

    let dist = |p: &ParamVector| distance(&p.to_f64(), &init64);
    let net = Compiled::new(&params, &config.arch)?;
    let initial = metrics(&net, start_epoch, train_set, test_set, dist(&params))?;

    let mut saved = Vec::new();
    let save = |params: &ParamVector, m: &EpochMetrics, saved: &mut Vec<Checkpoint>| {
        saved.push(Checkpoint {
            arch: config.arch.clone(),
            params: params.clone(),
            meta: CheckpointMeta {
                epoch: m.epoch,
                train_loss: m.train_loss,
                train_acc: m.train_acc,
                test_loss: m.test_loss,
                test_acc: m.test_acc,
                config_hash: hash.clone(),
                rng_digest: rng_digest(config.seed, m.epoch),
                is_best: false,
            },
        })
    };
    if config.checkpoint_epochs.contains(&start_epoch) && start_epoch < config.epochs {
        save(&params, &initial, &mut saved);
    }

    let mut opt = Sgd::new(params.len(), config.momentum, config.weight_decay)?;
    let mut epochs = Vec::new();
    let mut x = vec![0.0f64; config.batch_size * row];
    for epoch in start_epoch..config.epochs {
        let lr = config.lr_at(epoch);
        let order = batch_stream(config.seed, epoch).permutation(n);
        for batch in order.chunks(config.batch_size) {
            let xb = &mut x[..batch.len() * row];
            for (dst, &i) in xb.chunks_exact_mut(row).zip(batch) {
                for (d, &s) in dst.iter_mut().zip(train_set.images.row(i)) {
                    *d = s as f64;
                }
            }
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let net = Compiled::new(&params, &config.arch)?;
            let (loss, grad) = net.loss_and_grad(xb, &labels, batch.len());
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, detail: format!("batch loss {loss}") });
            }
            opt.step(&mut params.values, &grad, lr)
                .map_err(|e| Error::Diverged { epoch: epoch + 1, detail: e.to_string() })?;
        }
        if !params.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, detail: "non-finite parameters".into() });
        }
        let net = Compiled::new(&params, &config.arch)?;
        let m = metrics(&net, epoch + 1, train_set, test_set, dist(&params)).map_err(|e| match e {
            Error::NonFiniteLoss { .. } => Error::Diverged { epoch: epoch + 1, detail: "non-finite evaluation loss".into() },
            other => other,
        })?;
        if config.checkpoint_epochs.contains(&(epoch + 1)) && epoch + 1 < config.epochs {
            save(&params, &m, &mut saved);
        }
        epochs.push(m);
    }
    let last = epochs.last().cloned().unwrap_or_else(|| initial.clone());
    save(&params, &last, &mut saved);
    if let Some(best) = saved
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, c)| match acc {
            Some((_, a)) if c.meta.test_acc <= a => acc,
            _ => Some((i, c.meta.test_acc)),
        })
        .map(|(i, _)| i)
    {
        saved[best].meta.is_best = true;
    }
    let speed_epochs = epochs.len();
    let optimization_speed =
        (speed_epochs > 0).then(|| epochs.iter().map(|m| m.train_acc).sum::<f64>() / speed_epochs as f64);
    let record = RunRecord {
        initial,
        epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
        optimization_speed,
        speed_epochs,
    };
    let final_checkpoint = saved.last().cloned().expect("final checkpoint saved");
    Ok(TrainOutput { final_checkpoint, record, saved })
}
