use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::render::render;
use super::shuffle::ShuffleSpec;
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::numerics::rng::{hash_str, streams};
use crate::numerics::{RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainId {
    Source,
    RealLike,
    ClipartLike,
    QuickdrawLike,
    XrayLike,
}

impl DomainId {
    pub const ALL: [DomainId; 5] = [
        DomainId::Source,
        DomainId::RealLike,
        DomainId::ClipartLike,
        DomainId::QuickdrawLike,
        DomainId::XrayLike,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DomainId::Source => "source",
            DomainId::RealLike => "real_like",
            DomainId::ClipartLike => "clipart_like",
            DomainId::QuickdrawLike => "quickdraw_like",
            DomainId::XrayLike => "xray_like",
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown domain {s:?}")))
    }
}

/// Per-domain rendering constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub radius: f64,
    pub center_jitter: f64,
    pub rotation_jitter: f64,
    pub stroke: f64,
    pub noise: f64,
    pub fill_noise: f64,
    pub gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: DomainId,
    pub num_classes: usize,
    pub image_size: usize,
    pub style: Style,
}

impl DomainSpec {
    pub fn new(domain_id: DomainId) -> Self {
        let base = Style {
            radius: 6.0,
            center_jitter: 1.0,
            rotation_jitter: 0.25,
            stroke: 0.9,
            noise: 0.0,
            fill_noise: 0.0,
            gradient: 0.0,
        };
        let style = match domain_id {
            DomainId::Source => Style { noise: 0.12, fill_noise: 0.04, gradient: 0.3, ..base },
            DomainId::RealLike => Style { noise: 0.08, fill_noise: 0.08, gradient: 0.6, radius: 5.5, ..base },
            DomainId::ClipartLike => Style { stroke: 1.0, ..base },
            DomainId::QuickdrawLike => Style { stroke: 1.1, rotation_jitter: 0.35, ..base },
            DomainId::XrayLike => Style { noise: 0.03, radius: 6.5, ..base },
        };
        DomainSpec { domain_id, num_classes: 10, image_size: 16, style }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Test examples are drawn from this global index onward, so splits never overlap.
pub const TEST_INDEX_OFFSET: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub domains: Vec<DomainId>,
    pub seeds: Vec<u64>,
    pub split: Split,
    pub shuffle: Option<ShuffleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl Provenance {
    /// Short human-readable id, e.g. `clipart_like@7/train/shuffle8`.
    pub fn id(&self) -> String {
        let doms: Vec<String> =
            self.domains.iter().zip(&self.seeds).map(|(d, s)| format!("{d}@{s}")).collect();
        let split = match self.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let mut id = format!("{}/{split}", doms.join("+"));
        if let Some(s) = &self.shuffle {
            id.push_str(&format!("/shuffle{}", s.block));
        }
        id
    }
}

/// Images `(N, H, W, C)` with integer labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// First `n` examples (all if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Size("no datasets to concatenate".into()))?;
        if parts.iter().any(|p| p.num_classes != first.num_classes || p.provenance.split != first.provenance.split) {
            return domain("datasets differ in class count or split");
        }
        let images = Tensor::concat_rows(&parts.iter().map(|p| &p.images).collect::<Vec<_>>())?;
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        let provenance = Provenance {
            domains: parts.iter().flat_map(|p| p.provenance.domains.clone()).collect(),
            seeds: parts.iter().flat_map(|p| p.provenance.seeds.clone()).collect(),
            split: first.provenance.split,
            shuffle: first.provenance.shuffle.clone(),
            warning: None,
        };
        Ok(Dataset { images, labels, num_classes: first.num_classes, provenance })
    }
}

fn image_stream(spec: &DomainSpec, seed: u64, global_index: u64) -> RngStream {
    RngStream::derive(seed, &[streams::DATA, hash_str(spec.domain_id.as_str()), global_index])
}

/// Renders a single example; identical `(domain, seed, index)` gives identical pixels.
pub fn render_example(spec: &DomainSpec, split: Split, seed: u64, index: usize) -> (Vec<f32>, usize) {
    let label = index % spec.num_classes;
    let global = match split {
        Split::Train => index as u64,
        Split::Test => TEST_INDEX_OFFSET + index as u64,
    };
    let mut rng = image_stream(spec, seed, global);
    (render(spec, label, &mut rng), label)
}

/// Class-balanced dataset: example `i` has label `i mod num_classes`.
pub fn generate(spec: &DomainSpec, split: Split, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return domain("dataset size must be at least 1");
    }
    let examples = exec::map_indexed(n, |i| render_example(spec, split, seed, i));
    let size = spec.image_size;
    let mut data = Vec::with_capacity(n * size * size * 3);
    let mut labels = Vec::with_capacity(n);
    for (img, y) in examples {
        data.extend_from_slice(&img);
        labels.push(y);
    }
    let warning = (n < spec.num_classes)
        .then(|| format!("{n} examples cannot cover {} classes; balance impossible", spec.num_classes));
    Ok(Dataset {
        images: Tensor::new(vec![n, size, size, 3], data)?,
        labels,
        num_classes: spec.num_classes,
        provenance: Provenance {
            domains: vec![spec.domain_id],
            seeds: vec![seed],
            split,
            shuffle: None,
            warning,
        },
    })
}

/// Union of several domains, `n` examples from each, each with its own seed.
pub fn generate_mixture(parts: &[(DomainId, u64)], split: Split, n: usize) -> Result<Dataset> {
    let sets = parts
        .iter()
        .map(|&(d, seed)| generate(&DomainSpec::new(d), split, n, seed))
        .collect::<Result<Vec<_>>>()?;
    Dataset::concat(&sets)
}
