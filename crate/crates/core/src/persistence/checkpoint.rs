//! `LLCK` files: magic, version (u32 LE), arch JSON and metadata JSON (each
//! u32 LE length-prefixed), then the f32 LE parameter block.

use std::path::Path;

use super::write_bytes;
use crate::error::{Error, Result, Section};
use crate::model::{ArchDescriptor, ParamVector};
use crate::trainer::{Checkpoint, CheckpointMeta};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn push_block(out: &mut Vec<u8>, block: &[u8]) {
    out.extend_from_slice(&(block.len() as u32).to_le_bytes());
    out.extend_from_slice(block);
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if ckpt.params.index != ParamVector::index_for(&ckpt.arch) {
        return Err(Error::Size("checkpoint parameters do not match its architecture".into()));
    }
    if !ckpt.params.is_finite() {
        return Err(Error::Domain("refusing to save non-finite parameters".into()));
    }
    let mut out = Vec::with_capacity(64 + ckpt.params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    push_block(&mut out, ckpt.arch.to_text().as_bytes());
    push_block(&mut out, &serde_json::to_vec(&ckpt.meta)?);
    for v in &ckpt.params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: Section) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Truncated(section));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self, section: Section) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn block(&mut self, section: Section) -> Result<&'a [u8]> {
        let n = self.u32(section)? as usize;
        self.take(n, section)
    }
}

fn malformed(section: Section, e: impl std::fmt::Display) -> Error {
    Error::Malformed { section, detail: e.to_string() }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader(bytes);
    if r.take(4, Section::Magic)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { section: Section::Magic, expected: "LLCK" });
    }
    let version = r.u32(Section::Version)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let arch_text = std::str::from_utf8(r.block(Section::Header)?).map_err(|e| malformed(Section::Header, e))?;
    let arch = ArchDescriptor::from_text(arch_text).map_err(|e| malformed(Section::Header, e))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(r.block(Section::Metadata)?).map_err(|e| malformed(Section::Metadata, e))?;
    let count = arch.param_count();
    let values: Vec<f32> = r
        .take(count * 4, Section::Payload)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if !r.0.is_empty() {
        return Err(malformed(Section::Payload, format!("{} trailing bytes", r.0.len())));
    }
    let params = ParamVector::from_values(&arch, values)?;
    if !params.is_finite() {
        return Err(malformed(Section::Payload, "non-finite parameter"));
    }
    Ok(Checkpoint { arch, params, meta })
}

/// Writes the checkpoint and returns the SHA-256 of the file.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<String> {
    write_bytes(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
