//! Block-shuffle corruption: permute equal-sized image blocks, or, in `Star`
//! mode, every scalar across positions and channels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::domain::Dataset;
use crate::error::{domain, Error, Result};
use crate::exec;
use crate::numerics::rng::streams;
use crate::numerics::{RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockSize {
    Size(usize),
    Star,
}

impl BlockSize {
    /// The sweep of the block-shuffle experiment, from intact to fully scrambled.
    pub const SWEEP: [BlockSize; 6] = [
        BlockSize::Size(16),
        BlockSize::Size(8),
        BlockSize::Size(4),
        BlockSize::Size(2),
        BlockSize::Size(1),
        BlockSize::Star,
    ];
}

impl fmt::Display for BlockSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSize::Size(b) => write!(f, "{b}"),
            BlockSize::Star => f.write_str("star"),
        }
    }
}

impl FromStr for BlockSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "star" | "*" => Ok(BlockSize::Star),
            t => t
                .parse::<usize>()
                .map(BlockSize::Size)
                .map_err(|_| Error::Domain(format!("bad block size {s:?}"))),
        }
    }
}

impl Serialize for BlockSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BlockSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleSpec {
    pub block: BlockSize,
    pub seed: u64,
    /// One permutation for every image instead of one per example index.
    #[serde(default)]
    pub shared: bool,
}

impl ShuffleSpec {
    pub fn new(block: BlockSize, seed: u64) -> Self {
        ShuffleSpec { block, seed, shared: false }
    }

    /// Stream that drives the permutation of example `index`.
    pub fn stream(&self, index: usize) -> RngStream {
        let key = if self.shared { 0 } else { index as u64 };
        RngStream::derive(self.seed, &[streams::SHUFFLE, key])
    }
}

/// Shuffles one `(H, W, C)` image. Output block `p` takes input block `perm[p]`,
/// where `perm` is a Fisher–Yates permutation drawn from [`ShuffleSpec::stream`].
pub fn block_shuffle_slice(img: &[f32], size: usize, channels: usize, spec: &ShuffleSpec, index: usize) -> Result<Vec<f32>> {
    if img.len() != size * size * channels {
        return Err(Error::Size(format!("image has {} values, expected {size}x{size}x{channels}", img.len())));
    }
    let mut rng = spec.stream(index);
    match spec.block {
        BlockSize::Star => {
            let perm = rng.permutation(img.len());
            Ok(perm.iter().map(|&i| img[i]).collect())
        }
        BlockSize::Size(b) => {
            if b == 0 || size % b != 0 {
                return domain(format!("block size {b} does not divide image size {size}"));
            }
            let per_side = size / b;
            if per_side == 1 {
                return Ok(img.to_vec());
            }
            let perm = rng.permutation(per_side * per_side);
            let mut out = vec![0.0f32; img.len()];
            for (dst, &src) in perm.iter().enumerate() {
                let (dy, dx) = (dst / per_side * b, dst % per_side * b);
                let (sy, sx) = (src / per_side * b, src % per_side * b);
                for r in 0..b {
                    let d = ((dy + r) * size + dx) * channels;
                    let s = ((sy + r) * size + sx) * channels;
                    out[d..d + b * channels].copy_from_slice(&img[s..s + b * channels]);
                }
            }
            Ok(out)
        }
    }
}

/// Shuffles a single `(H, W, C)` image tensor.
pub fn block_shuffle(img: &Tensor, spec: &ShuffleSpec, index: usize) -> Result<Tensor> {
    let s = img.shape();
    if s.len() != 3 || s[0] != s[1] {
        return Err(Error::Size(format!("expected a square HxWxC image, got {s:?}")));
    }
    Tensor::new(s.to_vec(), block_shuffle_slice(img.data(), s[0], s[2], spec, index)?)
}

/// Applies the corruption to every example, keyed by its position in the dataset.
pub fn shuffle_dataset(ds: &Dataset, spec: &ShuffleSpec) -> Result<Dataset> {
    let s = ds.images.shape();
    let (size, channels) = (s[1], s[3]);
    let rows = exec::try_map_indexed(ds.len(), |i| block_shuffle_slice(ds.images.row(i), size, channels, spec, i))?;
    let mut out = ds.clone();
    out.images = Tensor::new(s.to_vec(), rows.concat())?;
    out.provenance.shuffle = Some(spec.clone());
    Ok(out)
}

/// `100·(a_pt − a_rit)/a_pt`, in percent.
pub fn relative_accuracy_drop(a_pt: f64, a_rit: f64) -> Result<f64> {
    if !(a_pt > 0.0) {
        return domain(format!("P-T accuracy must be positive, got {a_pt}"));
    }
    Ok(100.0 * (a_pt - a_rit) / a_pt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Vec<f32> {
        (0..16 * 16 * 3).map(|i| i as f32).collect()
    }

    fn sorted(v: &[f32]) -> Vec<f32> {
        let mut v = v.to_vec();
        v.sort_by(f32::total_cmp);
        v
    }

    #[test]
    fn full_block_is_identity() {
        let img = ramp();
        let out = block_shuffle_slice(&img, 16, 3, &ShuffleSpec::new(BlockSize::Size(16), 9), 3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn multiset_preserved_for_all_sizes() {
        let img = ramp();
        for block in BlockSize::SWEEP {
            let out = block_shuffle_slice(&img, 16, 3, &ShuffleSpec::new(block, 1), 0).unwrap();
            assert_eq!(sorted(&out), sorted(&img), "{block}");
        }
    }

    #[test]
    fn per_channel_histograms_kept_except_star() {
        let img = ramp();
        let channel = |v: &[f32], c: usize| sorted(&v.iter().skip(c).step_by(3).copied().collect::<Vec<_>>());
        for block in BlockSize::SWEEP {
            let out = block_shuffle_slice(&img, 16, 3, &ShuffleSpec::new(block, 2), 5).unwrap();
            let same = (0..3).all(|c| channel(&out, c) == channel(&img, c));
            assert_eq!(same, block != BlockSize::Star, "{block}");
        }
    }

    #[test]
    fn quadrants_follow_fisher_yates_replay() {
        // Four constant 8×8 quadrants valued 0..3.
        let mut img = vec![0.0f32; 16 * 16 * 3];
        for y in 0..16 {
            for x in 0..16 {
                let q = (y / 8) * 2 + x / 8;
                img[(y * 16 + x) * 3..(y * 16 + x) * 3 + 3].fill(q as f32);
            }
        }
        let spec = ShuffleSpec::new(BlockSize::Size(8), 77);
        let out = block_shuffle_slice(&img, 16, 3, &spec, 12).unwrap();

        let mut rng = RngStream::derive(77, &[streams::SHUFFLE, 12]);
        let mut perm = [0usize, 1, 2, 3];
        for i in (1..4).rev() {
            let j = rng.next_below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        for (dst, &src) in perm.iter().enumerate() {
            let (y, x) = (dst / 2 * 8 + 3, dst % 2 * 8 + 5);
            assert_eq!(out[(y * 16 + x) * 3], src as f32);
        }
    }

    #[test]
    fn same_index_same_permutation() {
        let img = ramp();
        let spec = ShuffleSpec::new(BlockSize::Size(2), 4);
        let a = block_shuffle_slice(&img, 16, 3, &spec, 8).unwrap();
        assert_eq!(a, block_shuffle_slice(&img, 16, 3, &spec, 8).unwrap());
        assert_ne!(a, block_shuffle_slice(&img, 16, 3, &spec, 9).unwrap());
        let shared = ShuffleSpec { shared: true, ..spec };
        assert_eq!(
            block_shuffle_slice(&img, 16, 3, &shared, 8).unwrap(),
            block_shuffle_slice(&img, 16, 3, &shared, 9).unwrap()
        );
    }

    #[test]
    fn non_dividing_block_rejected() {
        let img = ramp();
        assert!(matches!(
            block_shuffle_slice(&img, 16, 3, &ShuffleSpec::new(BlockSize::Size(3), 0), 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn relative_drop_examples() {
        assert!((relative_accuracy_drop(0.8, 0.6).unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(relative_accuracy_drop(0.3, 0.3).unwrap(), 0.0);
        assert!((relative_accuracy_drop(0.5, 0.75).unwrap() + 50.0).abs() < 1e-12);
        assert!(relative_accuracy_drop(0.0, 0.5).is_err());
    }
}
