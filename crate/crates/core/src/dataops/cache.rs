//! `LLDS` dataset files.
//!
//! Layout: magic `LLDS`, version (u32 LE), header length (u32 LE), header JSON,
//! labels as u16 LE, then images as f32 LE in `(N, H, W, C)` order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::domain::{generate, DomainSpec, Provenance, Split};
use super::Dataset;
use crate::error::{Error, Result, Section};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"LLDS";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
    num_classes: usize,
    shape: Vec<usize>,
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        provenance: ds.provenance.clone(),
        num_classes: ds.num_classes,
        shape: ds.images.shape().to_vec(),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + ds.len() * 2 + ds.images.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for &y in &ds.labels {
        out.extend_from_slice(&(y as u16).to_le_bytes());
    }
    for v in ds.images.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(buf: &mut &'a [u8], n: usize, section: Section) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Truncated(section));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn read_u32(buf: &mut &[u8], section: Section) -> Result<u32> {
    let b = take(buf, 4, section)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut buf = bytes;
    if take(&mut buf, 4, Section::Magic)? != MAGIC {
        return Err(Error::BadMagic { section: Section::Magic, expected: "LLDS" });
    }
    let version = read_u32(&mut buf, Section::Version)?;
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    let len = read_u32(&mut buf, Section::Header)? as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, len, Section::Header)?)
        .map_err(|e| Error::Malformed { section: Section::Header, detail: e.to_string() })?;
    let n = header.shape.first().copied().unwrap_or(0);
    let labels: Vec<usize> = take(&mut buf, n * 2, Section::Labels)?
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    let count: usize = header.shape.iter().product();
    let data: Vec<f32> = take(&mut buf, count * 4, Section::Payload)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if !buf.is_empty() {
        return Err(Error::Malformed { section: Section::Payload, detail: format!("{} trailing bytes", buf.len()) });
    }
    if labels.iter().any(|&y| y >= header.num_classes) {
        return Err(Error::Malformed { section: Section::Labels, detail: "label out of range".into() });
    }
    Ok(Dataset {
        images: Tensor::new(header.shape, data)?,
        labels,
        num_classes: header.num_classes,
        provenance: header.provenance,
    })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

/// Cache file for a given generation request.
pub fn cache_path(dir: &Path, spec: &DomainSpec, split: Split, n: usize, seed: u64) -> PathBuf {
    let key = serde_json::to_vec(&(spec, split, n, seed)).expect("serializable key");
    let digest = hex::encode(Sha256::digest(&key));
    dir.join(format!("{}-{}.llds", spec.domain_id, &digest[..16]))
}

/// [`generate`], reading from and writing to `dir` when given.
pub fn generate_cached(dir: Option<&Path>, spec: &DomainSpec, split: Split, n: usize, seed: u64) -> Result<Dataset> {
    let Some(dir) = dir else {
        return generate(spec, split, n, seed);
    };
    let path = cache_path(dir, spec, split, n, seed);
    if path.exists() {
        if let Ok(ds) = read_dataset(&path) {
            return Ok(ds);
        }
    }
    let ds = generate(spec, split, n, seed)?;
    std::fs::create_dir_all(dir)?;
    write_dataset(&path, &ds)?;
    Ok(ds)
}
