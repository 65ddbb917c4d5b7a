//! Experiment configuration: a sectioned `key = value` file in TOML syntax.

use std::path::Path;

use basinscope_core::criticality::{log_grid, CriticalityConfig, Endpoint, NoiseMode, PathKind};
use basinscope_core::dataops::{BlockSize, DomainId, ShuffleSpec};
use basinscope_core::landscape::LambdaGrid;
use basinscope_core::model::ArchDescriptor;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainSection,
    pub data: DataSection,
    pub interpolate: InterpolateSection,
    pub basin: BasinSection,
    pub criticality: CriticalitySection,
    pub similarity: SimilaritySection,
    pub spectrum: SpectrumSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// `tiny4` or a path to an architecture text file.
    pub arch: String,
    /// Base seed. Pre-training uses seed + 100; the two replicates use seed + 1 and seed + 2.
    pub seed: u64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pretrain_epochs: usize,
    /// `[epoch, lr]` pairs.
    pub pretrain_lr_schedule: Vec<(usize, f64)>,
    pub finetune_epochs: usize,
    pub finetune_lr_schedule: Vec<(usize, f64)>,
    /// Fine-tuning epochs saved besides the final one; used by optimization paths.
    pub finetune_checkpoints: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            arch: "tiny4".into(),
            seed: 0,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: 1e-4,
            pretrain_epochs: 30,
            pretrain_lr_schedule: vec![(0, 0.05), (20, 0.005)],
            finetune_epochs: 60,
            finetune_lr_schedule: vec![(0, 0.05), (30, 0.005)],
            finetune_checkpoints: vec![10, 20, 30, 40, 50],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Vec<(DomainId, u64)>,
    /// Concatenated in order; more than one domain gives combined-domain training.
    pub target: Vec<(DomainId, u64)>,
    /// Per domain.
    pub n_train: usize,
    pub n_test: usize,
    /// `none`, a block size, or `star`; applied to the target task.
    pub shuffle: String,
    pub shuffle_seed: u64,
    pub shared_permutation: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: vec![(DomainId::Source, 1)],
            target: vec![(DomainId::ClipartLike, 2)],
            n_train: 2000,
            n_test: 1000,
            shuffle: "none".into(),
            shuffle_seed: 0,
            shared_permutation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateSection {
    /// `start:end:points`.
    pub grid: String,
    pub extrapolate_grid: String,
    /// Extra evaluation domains for the cross-domain curves.
    pub eval_domains: Vec<(DomainId, u64)>,
    /// Union task for the combined-domain pairs; empty skips them.
    pub combined_domains: Vec<(DomainId, u64)>,
}

impl Default for InterpolateSection {
    fn default() -> Self {
        InterpolateSection {
            grid: "0:1:25".into(),
            extrapolate_grid: "-1:2:61".into(),
            eval_domains: vec![(DomainId::RealLike, 3), (DomainId::QuickdrawLike, 4), (DomainId::XrayLike, 5)],
            combined_domains: vec![(DomainId::ClipartLike, 2), (DomainId::QuickdrawLike, 4)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinSection {
    pub epsilon: f64,
    pub samples: usize,
    /// Test examples the error rate is measured on.
    pub eval_examples: usize,
    pub interval_points: usize,
    pub delta_bisection_steps: usize,
    pub walk_bisection_steps: usize,
    /// Outward step doublings before the basin is reported unbounded.
    pub max_doublings: usize,
    pub seed: u64,
}

impl Default for BasinSection {
    fn default() -> Self {
        BasinSection {
            epsilon: 0.05,
            samples: 100,
            eval_examples: 250,
            interval_points: 11,
            delta_bisection_steps: 4,
            walk_bisection_steps: 12,
            max_doublings: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalitySection {
    pub alpha_points: usize,
    pub sigma_points: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub noise_samples: usize,
    pub epsilon: f64,
    pub noise_mode: NoiseMode,
    pub path: PathKind,
    pub endpoint: Endpoint,
    /// Examples per split the perturbed losses are measured on.
    pub eval_examples: usize,
    /// Empty means every module.
    pub modules: Vec<String>,
    pub seed: u64,
}

impl Default for CriticalitySection {
    fn default() -> Self {
        CriticalitySection {
            alpha_points: 6,
            sigma_points: 6,
            sigma_min: 1e-3,
            sigma_max: 1.0,
            noise_samples: 3,
            epsilon: 0.1,
            noise_mode: NoiseMode::WeightNorm,
            path: PathKind::Direct,
            endpoint: Endpoint::Final,
            eval_examples: 250,
            modules: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilaritySection {
    pub max_examples: usize,
    pub seed: u64,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        SimilaritySection { max_examples: 2048, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub threshold_points: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { threshold_points: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub block_sizes: Vec<BlockSize>,
    /// Pre-training epochs saved and fine-tuned in the checkpoint sweep.
    pub checkpoint_epochs: Vec<usize>,
    pub finetune_epochs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { block_sizes: BlockSize::SWEEP.to_vec(), checkpoint_epochs: vec![0, 2, 5, 10, 20, 30], finetune_epochs: 60 }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.train;
        if t.arch != "tiny4" && !Path::new(&t.arch).exists() {
            return Err(bad(format!("[train] arch {:?} is neither tiny4 nor an existing file", t.arch)));
        }
        if t.pretrain_epochs == 0 || t.finetune_epochs == 0 || self.sweep.finetune_epochs == 0 {
            return Err(bad("epoch counts must be positive"));
        }
        if self.data.source.is_empty() || self.data.target.is_empty() {
            return Err(bad("[data] source and target must each list at least one domain"));
        }
        if self.data.n_train == 0 || self.data.n_test == 0 {
            return Err(bad("[data] n_train and n_test must be positive"));
        }
        self.shuffle()?;
        self.grid()?;
        self.extrapolate_grid()?;
        if let Some(&e) = self.sweep.checkpoint_epochs.iter().find(|&&e| e > t.pretrain_epochs) {
            return Err(bad(format!("[sweep] checkpoint epoch {e} exceeds pretrain_epochs {}", t.pretrain_epochs)));
        }
        if let Some(&e) = t.finetune_checkpoints.iter().find(|&&e| e > t.finetune_epochs) {
            return Err(bad(format!("[train] finetune checkpoint {e} exceeds finetune_epochs {}", t.finetune_epochs)));
        }
        let b = &self.basin;
        if !(b.epsilon > 0.0) || b.samples < 100 || b.eval_examples == 0 || b.interval_points < 2 {
            return Err(bad("[basin] needs epsilon > 0, samples >= 100, eval_examples > 0, interval_points >= 2"));
        }
        let c = &self.criticality;
        if c.alpha_points < 2 || c.sigma_points == 0 || !(0.0 < c.sigma_min && c.sigma_min <= c.sigma_max && c.sigma_max <= 1.0) {
            return Err(bad("[criticality] needs alpha_points >= 2, sigma_points >= 1, 0 < sigma_min <= sigma_max <= 1"));
        }
        if c.eval_examples == 0 {
            return Err(bad("[criticality] eval_examples must be positive"));
        }
        self.criticality_config().validate().map_err(|e| bad(format!("[criticality] {e}")))?;
        if self.similarity.max_examples < 2 {
            return Err(bad("[similarity] max_examples must be at least 2"));
        }
        if self.spectrum.threshold_points < 2 {
            return Err(bad("[spectrum] threshold_points must be at least 2"));
        }
        if self.sweep.block_sizes.is_empty() {
            return Err(bad("[sweep] block_sizes is empty"));
        }
        Ok(())
    }

    pub fn arch(&self) -> Result<ArchDescriptor, CliError> {
        if self.train.arch == "tiny4" {
            return Ok(ArchDescriptor::tiny4());
        }
        let text = std::fs::read_to_string(&self.train.arch).map_err(|e| bad(format!("cannot read arch {}: {e}", self.train.arch)))?;
        ArchDescriptor::from_text(&text).map_err(|e| bad(format!("arch {}: {e}", self.train.arch)))
    }

    pub fn shuffle(&self) -> Result<Option<ShuffleSpec>, CliError> {
        let s = self.data.shuffle.trim();
        if s == "none" {
            return Ok(None);
        }
        let block: BlockSize = s.parse().map_err(|e| bad(format!("[data] shuffle: {e}")))?;
        Ok(Some(ShuffleSpec { block, seed: self.data.shuffle_seed, shared: self.data.shared_permutation }))
    }

    pub fn grid(&self) -> Result<LambdaGrid, CliError> {
        let g = LambdaGrid::parse(&self.interpolate.grid).map_err(|e| bad(format!("[interpolate] grid: {e}")))?;
        g.validate().map_err(|e| bad(format!("[interpolate] grid: {e}")))?;
        Ok(g)
    }

    pub fn extrapolate_grid(&self) -> Result<LambdaGrid, CliError> {
        LambdaGrid::parse(&self.interpolate.extrapolate_grid).map_err(|e| bad(format!("[interpolate] extrapolate_grid: {e}")))
    }

    pub fn criticality_config(&self) -> CriticalityConfig {
        let c = &self.criticality;
        let last = (c.alpha_points.max(2) - 1) as f64;
        CriticalityConfig {
            alpha_grid: (0..c.alpha_points).map(|i| i as f64 / last).collect(),
            sigma_grid: if c.sigma_min == c.sigma_max { vec![c.sigma_max] } else { log_grid(c.sigma_min, c.sigma_max, c.sigma_points) },
            noise_samples: c.noise_samples,
            epsilon: c.epsilon,
            noise_mode: c.noise_mode,
            seed: c.seed,
        }
    }

    pub fn pretrain_seed(&self) -> u64 {
        self.train.seed + 100
    }

    pub fn replicate_seeds(&self) -> [u64; 2] {
        [self.train.seed + 1, self.train.seed + 2]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
