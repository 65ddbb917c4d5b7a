use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::arch::ArchDescriptor;
use crate::error::{domain, Error, Result};
use crate::numerics::Tensor;

/// Location of one module inside a [`ParamVector`]: its weight block followed by its bias.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub length: usize,
    /// Shape of the weight block; the remaining `length - product(shape)` values are the bias.
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.length
    }

    pub fn weight_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.weight_len()
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.offset + self.weight_len()..self.offset + self.length
    }
}

/// Flat parameter vector with a per-module index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f32>,
    pub index: Vec<ParamEntry>,
}

impl PartialEq for ParamVector {
    /// Bitwise comparison of values (so `-0.0 != 0.0` and NaN payloads matter).
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Owned weight and bias of one module.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleParams {
    pub name: String,
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

/// Read-only window onto a module's slice.
#[derive(Debug)]
pub struct ModuleRef<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub values: &'a [f32],
}

/// Mutable window onto a module's slice; writes touch only that slice.
#[derive(Debug)]
pub struct ModuleView<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub values: &'a mut [f32],
}

impl ModuleView<'_> {
    pub fn assign(&mut self, src: &[f32]) -> Result<()> {
        if src.len() != self.values.len() {
            return Err(Error::Size(format!(
                "module {} has {} values, got {}",
                self.name,
                self.values.len(),
                src.len()
            )));
        }
        self.values.copy_from_slice(src);
        Ok(())
    }
}

impl ParamVector {
    pub fn index_for(arch: &ArchDescriptor) -> Vec<ParamEntry> {
        let mut offset = 0;
        arch.layers()
            .into_iter()
            .map(|l| {
                let shape = l.weight_shape();
                let length = shape.iter().product::<usize>() + l.bias_len();
                let e = ParamEntry { name: l.name, offset, length, shape };
                offset += length;
                e
            })
            .collect()
    }

    pub fn zeros(arch: &ArchDescriptor) -> Self {
        ParamVector { values: vec![0.0; arch.param_count()], index: Self::index_for(arch) }
    }

    pub fn from_values(arch: &ArchDescriptor, values: Vec<f32>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Size(format!(
                "architecture has {} parameters, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        Ok(ParamVector { values, index: Self::index_for(arch) })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector { values: vec![0.0; self.values.len()], index: self.index.clone() }
    }

    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Size(format!("expected {} values, got {}", self.values.len(), values.len())));
        }
        Ok(ParamVector { values, index: self.index.clone() })
    }

    pub fn from_f64(&self, values: &[f64]) -> Result<Self> {
        self.with_values(values.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.index != other.index {
            return domain("parameter vectors have different module index tables");
        }
        Ok(())
    }

    /// Verifies offsets are contiguous and cover the vector exactly.
    pub fn check_index(&self) -> Result<()> {
        let mut offset = 0;
        for e in &self.index {
            if e.offset != offset || e.weight_len() > e.length {
                return domain(format!("index entry {} is not contiguous", e.name));
            }
            offset += e.length;
        }
        if offset != self.values.len() {
            return domain(format!("index covers {offset} of {} values", self.values.len()));
        }
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry> {
        self.index
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Domain(format!("unknown module {name:?}")))
    }

    pub fn module(&self, name: &str) -> Result<ModuleRef<'_>> {
        let e = self.entry(name)?;
        Ok(ModuleRef { name: &e.name, shape: &e.shape, values: &self.values[e.range()] })
    }

    pub fn module_mut(&mut self, name: &str) -> Result<ModuleView<'_>> {
        let pos = self
            .index
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::Domain(format!("unknown module {name:?}")))?;
        let e = &self.index[pos];
        Ok(ModuleView { name: &e.name, shape: &e.shape, values: &mut self.values[e.range()] })
    }

    /// Copy with module `name` replaced by `src`.
    pub fn with_module(&self, name: &str, src: &[f32]) -> Result<Self> {
        let mut out = self.clone();
        out.module_mut(name)?.assign(src)?;
        Ok(out)
    }

    pub fn unflatten(&self) -> Vec<ModuleParams> {
        self.index
            .iter()
            .map(|e| ModuleParams {
                name: e.name.clone(),
                weight: Tensor::new(e.shape.clone(), self.values[e.weight_range()].to_vec())
                    .expect("index shape matches"),
                bias: self.values[e.bias_range()].to_vec(),
            })
            .collect()
    }

    pub fn flatten(arch: &ArchDescriptor, modules: &[ModuleParams]) -> Result<Self> {
        let index = Self::index_for(arch);
        if modules.len() != index.len() {
            return Err(Error::Size(format!("expected {} modules, got {}", index.len(), modules.len())));
        }
        let mut values = Vec::with_capacity(arch.param_count());
        for (e, m) in index.iter().zip(modules) {
            if m.name != e.name || m.weight.shape() != e.shape.as_slice() || m.bias.len() != e.length - e.weight_len() {
                return Err(Error::Size(format!("module {} does not match {}", m.name, e.name)));
            }
            values.extend_from_slice(m.weight.data());
            values.extend_from_slice(&m.bias);
        }
        Ok(ParamVector { values, index })
    }
}
