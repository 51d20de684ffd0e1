//! Binary checkpoint, little-endian:
//!
//! ```text
//! "HRNN" | u32 version | u32 metadata_len | metadata JSON
//! u32 tensor_count | { u16 name_len | name | u32 rows | u32 cols | f64 * rows*cols }*
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{LabelSet, Vocab};
use crate::linalg::Matrix;
use crate::model::{HierConfig, HierModel, ModelError};
use crate::nn::Parameters;

pub const MAGIC: &[u8; 4] = b"HRNN";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic")]
    BadMagic,
    #[error("version mismatch: file has version {found}, expected {VERSION}")]
    VersionMismatch { found: u32 },
    #[error("truncated checkpoint while reading {what}")]
    Truncated { what: String },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bad metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: HierConfig,
    vocab: Vec<String>,
    tags: Vec<String>,
    classes: Vec<String>,
}

/// A trained model together with everything needed to run it on text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HierModel,
    pub vocab: Vocab,
    pub labels: LabelSet,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Metadata {
            config: self.model.config.clone(),
            vocab: self.vocab.tokens().to_vec(),
            tags: self.labels.tags().to_vec(),
            classes: self.labels.classes().to_vec(),
        };
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");
        let params = self.model.params();
        let mut out =
            Vec::with_capacity(16 + meta.len() + 8 * self.model.param_count() + 32 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            let name = p.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
            for x in p.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let vocab = Vocab::from_tokens(meta.vocab).map_err(CheckpointError::Metadata)?;
        let labels = LabelSet::new(meta.tags, meta.classes).map_err(CheckpointError::Metadata)?;
        let cfg = meta.config;
        if cfg.vocab_size != vocab.len()
            || cfg.tag_count != labels.tag_count()
            || cfg.class_count != labels.class_count()
        {
            return Err(CheckpointError::LengthMismatch(format!(
                "config sizes ({}, {}, {}) disagree with vocab/tags/classes ({}, {}, {})",
                cfg.vocab_size,
                cfg.tag_count,
                cfg.class_count,
                vocab.len(),
                labels.tag_count(),
                labels.class_count()
            )));
        }

        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(64));
        for i in 0..count {
            let name_len =
                u16::from_le_bytes(r.array(&format!("tensor {i} name length"))?) as usize;
            let name = std::str::from_utf8(r.take(name_len, &format!("tensor {i} name"))?)
                .map_err(|_| CheckpointError::Metadata(format!("tensor {i} name is not UTF-8")))?
                .to_string();
            let rows = r.u32(&format!("{name} rows"))? as usize;
            let cols = r.u32(&format!("{name} cols"))? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some())
                .ok_or_else(|| {
                    CheckpointError::LengthMismatch(format!(
                        "{name} has absurd shape {rows}x{cols}"
                    ))
                })?;
            let raw = r.take(8 * n, &format!("{name} data"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, Matrix::from_vec(rows, cols, data)));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::LengthMismatch(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        let model = HierModel::from_tensors(cfg, tensors)?;
        Ok(Self {
            model,
            vocab,
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.buf.len() => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => Err(CheckpointError::Truncated {
                what: what.to_string(),
            }),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}
