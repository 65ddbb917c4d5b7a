//! Artifact layout under the output directory, the fine-tune cache and manifests.
//!
//! ```text
//! <out>/pretrain/final.llck, e<NNN>.llck, record.csv
//! <out>/runs/<key>/final.llck, e<NNN>.llck, record.json   fine-tune cache
//! <out>/figures/<figure-id>/...                           figure bundles
//! <out>/<command>/<name>/...                              single commands
//! <out>/<run-id>.manifest.json
//! ```

use std::path::{Path, PathBuf};

use basinscope_core::dataops::{Dataset, DomainId, ShuffleSpec};
use basinscope_core::model::{init_random, ArchDescriptor, ParamVector};
use basinscope_core::numerics::rng::streams;
use basinscope_core::numerics::RngStream;
use basinscope_core::persistence::{
    digest_bytes, emit_table, load_checkpoint, save_checkpoint, write_json, Cell, ColumnKind, FileDigest, RunManifest, Table,
};
use basinscope_core::trainer::{train_from, Checkpoint, CheckpointMeta, DataSpec, Init, RunRecord, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub struct Workspace {
    pub out_dir: PathBuf,
    pub data_cache: Option<PathBuf>,
    pub config: ExperimentConfig,
}

/// One training run on the target task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub pretrained: bool,
    /// Ignored for pre-trained runs.
    pub init_seed: u64,
    pub batch_seed: u64,
}

impl Run {
    pub fn pt(batch_seed: u64) -> Self {
        Run { pretrained: true, init_seed: 0, batch_seed }
    }

    pub fn rit(init_seed: u64, batch_seed: u64) -> Self {
        Run { pretrained: false, init_seed, batch_seed }
    }

    pub fn label(&self) -> String {
        if self.pretrained {
            format!("pt_b{}", self.batch_seed)
        } else {
            format!("rit_i{}_b{}", self.init_seed, self.batch_seed)
        }
    }
}

/// A finished (or cached) fine-tune.
#[derive(Clone, Debug)]
pub struct Finetuned {
    pub key: String,
    pub init: ParamVector,
    pub final_checkpoint: Checkpoint,
    pub saved: Vec<Checkpoint>,
    pub record: RunRecord,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    record: RunRecord,
    saved_epochs: Vec<usize>,
}

pub fn params_digest(p: &ParamVector) -> String {
    let bytes: Vec<u8> = p.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    digest_bytes(&bytes)
}

/// A pseudo-checkpoint wrapping initial parameters.
pub fn init_checkpoint(arch: &ArchDescriptor, params: ParamVector) -> Checkpoint {
    Checkpoint {
        arch: arch.clone(),
        params,
        meta: CheckpointMeta {
            epoch: 0,
            train_loss: f64::NAN,
            train_acc: f64::NAN,
            test_loss: f64::NAN,
            test_acc: f64::NAN,
            config_hash: String::new(),
            rng_digest: String::new(),
            is_best: false,
        },
    }
}

pub fn record_table(record: &RunRecord) -> Table {
    let mut t = Table::new(&[
        ("epoch", ColumnKind::Int),
        ("train_loss", ColumnKind::Real),
        ("train_acc", ColumnKind::Real),
        ("test_loss", ColumnKind::Real),
        ("test_acc", ColumnKind::Real),
        ("distance_to_init", ColumnKind::Real),
    ]);
    for m in std::iter::once(&record.initial).chain(&record.epochs) {
        t.push(vec![
            Cell::from(m.epoch),
            m.train_loss.into(),
            m.train_acc.into(),
            m.test_loss.into(),
            m.test_acc.into(),
            m.distance_to_init.into(),
        ]);
    }
    t
}

fn epoch_file(e: usize) -> String {
    format!("e{e:03}.llck")
}

pub fn domains_name(domains: &[(DomainId, u64)]) -> String {
    domains.iter().map(|(d, _)| d.as_str()).collect::<Vec<_>>().join("+")
}

impl Workspace {
    pub fn new(out_dir: PathBuf, data_cache: Option<PathBuf>, config: ExperimentConfig) -> Self {
        Workspace { out_dir, data_cache, config }
    }

    pub fn arch(&self) -> CliResult<ArchDescriptor> {
        self.config.arch()
    }

    pub fn pretrain_dir(&self) -> PathBuf {
        self.out_dir.join("pretrain")
    }

    pub fn pretrain_config(&self) -> CliResult<TrainConfig> {
        let c = &self.config;
        let seed = c.pretrain_seed();
        let cfg = TrainConfig {
            arch: self.arch()?,
            data: DataSpec { domains: c.data.source.clone(), n_train: c.data.n_train, n_test: c.data.n_test, shuffle: None },
            epochs: c.train.pretrain_epochs,
            batch_size: c.train.batch_size,
            lr_schedule: c.train.pretrain_lr_schedule.clone(),
            momentum: c.train.momentum,
            weight_decay: c.train.weight_decay,
            seed,
            init: Init::Random { seed },
            checkpoint_epochs: c.sweep.checkpoint_epochs.clone(),
        };
        cfg.validate().map_err(|e| CliError::Config(format!("pre-training: {e}")))?;
        Ok(cfg)
    }

    /// Trains the source model and writes its checkpoints and learning curve.
    pub fn run_pretrain(&self) -> CliResult<Vec<PathBuf>> {
        let cfg = self.pretrain_config()?;
        let init = init_random(&cfg.arch, &mut RngStream::new(cfg.seed, streams::INIT));
        let (train, test) = self.load_data(&cfg.data)?;
        let out = train_from(&cfg, init, &train, &test)?;
        let dir = self.pretrain_dir();
        let mut files = Vec::new();
        for c in &out.saved {
            let p = dir.join(epoch_file(c.meta.epoch));
            save_checkpoint(c, &p)?;
            files.push(p);
        }
        let p = dir.join("final.llck");
        save_checkpoint(&out.final_checkpoint, &p)?;
        files.push(p);
        let p = dir.join("record.csv");
        emit_table(&record_table(&out.record), &p)?;
        files.push(p);
        eprintln!("pretrain: {} epochs in {:.1}s", cfg.epochs, out.record.wall_time_secs);
        Ok(files)
    }

    fn pretrain_hint(&self) -> String {
        format!("run `basinscope pretrain --out-dir {}` with the same config first", self.out_dir.display())
    }

    fn load_pretrain_file(&self, name: &str) -> CliResult<(Checkpoint, PathBuf)> {
        let path = self.pretrain_dir().join(name);
        if !path.exists() {
            return Err(CliError::Missing(format!("{} not found; {}", path.display(), self.pretrain_hint())));
        }
        let ckpt = load_checkpoint(&path)?;
        let expected = self.pretrain_config()?.hash();
        if ckpt.meta.config_hash != expected {
            return Err(CliError::Missing(format!(
                "{} was produced by a different pre-training config; {}",
                path.display(),
                self.pretrain_hint()
            )));
        }
        Ok((ckpt, path))
    }

    pub fn load_pretrain(&self) -> CliResult<(Checkpoint, PathBuf)> {
        self.load_pretrain_file("final.llck")
    }

    pub fn load_pretrain_epoch(&self, epoch: usize) -> CliResult<(Checkpoint, PathBuf)> {
        self.load_pretrain_file(&epoch_file(epoch))
    }

    pub fn load_data(&self, spec: &DataSpec) -> CliResult<(Dataset, Dataset)> {
        Ok(spec.load(self.data_cache.as_deref())?)
    }

    pub fn target_spec(&self, shuffle: Option<ShuffleSpec>) -> DataSpec {
        self.domains_spec(&self.config.data.target, shuffle)
    }

    pub fn domains_spec(&self, domains: &[(DomainId, u64)], shuffle: Option<ShuffleSpec>) -> DataSpec {
        DataSpec { domains: domains.to_vec(), n_train: self.config.data.n_train, n_test: self.config.data.n_test, shuffle }
    }

    /// Fine-tuning config for `run`; the initial weights are content-addressed so the
    /// config hash does not depend on where the pre-trained checkpoint lives.
    pub fn finetune_config(&self, data: DataSpec, run: Run, init: &ParamVector, epochs: usize) -> CliResult<TrainConfig> {
        let t = &self.config.train;
        let init_ref = if run.pretrained {
            Init::FromCheckpoint { path: PathBuf::from(format!("sha256:{}", params_digest(init))) }
        } else {
            Init::Random { seed: run.init_seed }
        };
        let cfg = TrainConfig {
            arch: self.arch()?,
            data,
            epochs,
            batch_size: t.batch_size,
            lr_schedule: t.finetune_lr_schedule.clone(),
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            seed: run.batch_seed,
            init: init_ref,
            checkpoint_epochs: t.finetune_checkpoints.iter().copied().filter(|&e| e < epochs).collect(),
        };
        cfg.validate().map_err(|e| CliError::Config(format!("fine-tuning: {e}")))?;
        Ok(cfg)
    }

    pub fn initial_params(&self, run: Run, pretrained: Option<&Checkpoint>) -> CliResult<ParamVector> {
        if run.pretrained {
            let p = pretrained.ok_or_else(|| CliError::Missing(format!("pre-trained weights; {}", self.pretrain_hint())))?;
            Ok(p.params.clone())
        } else {
            Ok(init_random(&self.arch()?, &mut RngStream::new(run.init_seed, streams::INIT)))
        }
    }

    /// Trains `cfg` from `init`, or loads the identical run from the cache.
    pub fn finetune(&self, cfg: &TrainConfig, init: ParamVector, train: &Dataset, test: &Dataset) -> basinscope_core::Result<Finetuned> {
        let key = cfg.hash()[..16].to_string();
        let dir = self.out_dir.join("runs").join(&key);
        let entry_path = dir.join("record.json");
        if entry_path.exists() {
            let entry: CacheEntry = serde_json::from_slice(&std::fs::read(&entry_path)?)?;
            let final_checkpoint = load_checkpoint(&dir.join("final.llck"))?;
            let saved = entry.saved_epochs.iter().map(|&e| load_checkpoint(&dir.join(epoch_file(e)))).collect::<Result<_, _>>()?;
            return Ok(Finetuned { key, init, final_checkpoint, saved, record: entry.record });
        }
        let out = train_from(cfg, init.clone(), train, test)?;
        for c in &out.saved {
            save_checkpoint(c, &dir.join(epoch_file(c.meta.epoch)))?;
        }
        save_checkpoint(&out.final_checkpoint, &dir.join("final.llck"))?;
        let entry = CacheEntry { record: out.record.clone(), saved_epochs: out.saved.iter().map(|c| c.meta.epoch).collect() };
        write_json(&entry_path, &entry)?;
        Ok(Finetuned { key, init, final_checkpoint: out.final_checkpoint, saved: out.saved, record: out.record })
    }

    /// Runs (or loads) several fine-tunes on one dataset, in parallel.
    pub fn finetune_many(
        &self,
        runs: &[Run],
        data: &DataSpec,
        sets: &(Dataset, Dataset),
        pretrained: Option<&Checkpoint>,
        epochs: usize,
    ) -> CliResult<Vec<Finetuned>> {
        let prepared = runs
            .iter()
            .map(|&r| {
                let init = self.initial_params(r, pretrained)?;
                let cfg = self.finetune_config(data.clone(), r, &init, epochs)?;
                Ok((cfg, init))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(basinscope_core::exec::try_map_indexed(prepared.len(), |i| {
            let (cfg, init) = &prepared[i];
            self.finetune(cfg, init.clone(), &sets.0, &sets.1)
        })?)
    }

    /// Writes `<run-id>.manifest.json` listing digests of `inputs` and `outputs`.
    pub fn write_manifest(&self, run_id: &str, command: &[String], inputs: &[PathBuf], outputs: &[PathBuf]) -> CliResult<PathBuf> {
        let mut m = RunManifest::start(run_id, command.to_vec(), self.config.to_json(), self.config.train.seed);
        for p in inputs {
            m.inputs.push(FileDigest::of(p, &self.out_dir)?);
        }
        for p in outputs {
            m.outputs.push(FileDigest::of(p, &self.out_dir)?);
        }
        Ok(m.finish(&self.out_dir)?)
    }
}

/// Writes a table and records its path.
pub fn emit(files: &mut Vec<PathBuf>, table: &Table, path: &Path) -> CliResult<()> {
    emit_table(table, path)?;
    files.push(path.to_path_buf());
    Ok(())
}

pub fn emit_json<T: Serialize>(files: &mut Vec<PathBuf>, value: &T, path: &Path) -> CliResult<()> {
    write_json(path, value)?;
    files.push(path.to_path_buf());
    Ok(())
}
