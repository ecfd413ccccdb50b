//! Named parameter tensors and their flat little-endian serialisation.

use serde::{Deserialize, Serialize};

use crate::algebra::{Blade, Signature};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Describes the flat parameter blob: names, shapes, blade order, signature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub signature: Option<(u8, u8)>,
    pub blade_order: Vec<String>,
    pub dtype: Dtype,
    pub params: Vec<ParamEntry>,
}

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    data: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its position.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "parameter shape");
        self.names.push(name.into());
        self.shapes.push(shape);
        self.data.push(data);
        self.data.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.data[i]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.data
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn manifest(&self, signature: Option<Signature>, dtype: Dtype) -> ParamManifest {
        let mut offset = 0;
        let params = self
            .names
            .iter()
            .zip(&self.shapes)
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let e = ParamEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                    len,
                };
                offset += len;
                e
            })
            .collect();
        let blade_order = match signature {
            Some(sig) => (0..sig.blade_count())
                .map(|i| Blade::from_index(i, sig.dim()).name())
                .collect(),
            None => Vec::new(),
        };
        ParamManifest {
            signature: signature.map(|s| (s.p(), s.q())),
            blade_order,
            dtype,
            params,
        }
    }

    pub fn to_le_bytes(&self, dtype: Dtype) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.count() * dtype.size());
        for v in self.data.iter().flatten() {
            match dtype {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
            }
        }
        out
    }

    pub fn from_le_bytes(manifest: &ParamManifest, bytes: &[u8]) -> Result<Self> {
        let total: usize = manifest.params.iter().map(|p| p.len).sum();
        let need = (total * manifest.dtype.size()) as u64;
        if (bytes.len() as u64) < need {
            return Err(Error::Truncated {
                expected: need,
                found: bytes.len() as u64,
            });
        }
        let mut set = ParamSet::new();
        for p in &manifest.params {
            if p.shape.iter().product::<usize>() != p.len {
                return Err(Error::HeaderMismatch(format!("parameter {} shape/len disagree", p.name)));
            }
            let start = p.offset * manifest.dtype.size();
            let raw = bytes
                .get(start..start + p.len * manifest.dtype.size())
                .ok_or(Error::Truncated {
                    expected: need,
                    found: bytes.len() as u64,
                })?;
            let data = match manifest.dtype {
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect(),
            };
            set.push(p.name.clone(), p.shape.clone(), data);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = ParamSet::new();
        p.push("a", vec![2, 2], vec![1.0, -2.0, 3.5, 1e-300]);
        p.push("b", vec![3], vec![0.1, 0.2, 0.3]);
        let m = p.manifest(Some(Signature::CL20), Dtype::F64);
        assert_eq!(m.blade_order, vec!["1", "e1", "e2", "e12"]);
        assert_eq!(m.params[1].offset, 4);
        let q = ParamSet::from_le_bytes(&m, &p.to_le_bytes(Dtype::F64)).unwrap();
        assert_eq!(p, q);
        assert!(ParamSet::from_le_bytes(&m, &[0u8; 10]).is_err());
    }
}
