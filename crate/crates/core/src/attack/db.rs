//! Response database: JSON-lines text records plus an aligned `EMB1`
//! embedding matrix.
//!
//! `EMB1` layout (little-endian): magic `EMB1`, `u32` dimension, `u64` row
//! count, then `count × dim` `f32` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::embed::SentenceEmbedding;
use crate::text::{tokenize, Utterance};

const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Responses with their single-precision embeddings. Item ids are row
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDatabase {
    responses: Vec<Utterance>,
    dim: usize,
    data: Vec<f32>,
    source_meta: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: u64,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl ResponseDatabase {
    /// Embeddings are stored as `f32`.
    pub fn new(responses: Vec<Utterance>, embeddings: &[SentenceEmbedding]) -> Result<Self, AttackError> {
        let dim = embeddings.first().map_or(0, SentenceEmbedding::dim);
        let mut data = Vec::with_capacity(dim * embeddings.len());
        for (i, e) in embeddings.iter().enumerate() {
            if e.dim() != dim {
                return Err(AttackError::Dimension {
                    context: format!("embedding {i}"),
                    expected: dim,
                    found: e.dim(),
                });
            }
            data.extend(e.as_slice().iter().map(|&x| x as f32));
        }
        Self::from_f32(responses, dim, data)
    }

    pub fn from_f32(responses: Vec<Utterance>, dim: usize, data: Vec<f32>) -> Result<Self, AttackError> {
        if responses.is_empty() {
            return Err(AttackError::EmptyDatabase);
        }
        if dim == 0 || data.len() != responses.len() * dim {
            return Err(AttackError::Misaligned {
                responses: responses.len(),
                embeddings: data.len().checked_div(dim).unwrap_or(0),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AttackError::Format(
                "embedding matrix contains a non-finite value".into(),
            ));
        }
        Ok(ResponseDatabase {
            responses,
            dim,
            data,
            source_meta: None,
        })
    }

    pub fn with_source_meta(mut self, meta: Vec<String>) -> Result<Self, AttackError> {
        if meta.len() != self.len() {
            return Err(AttackError::Misaligned {
                responses: self.len(),
                embeddings: meta.len(),
            });
        }
        self.source_meta = Some(meta);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn response(&self, id: usize) -> &Utterance {
        &self.responses[id]
    }

    pub fn responses(&self) -> &[Utterance] {
        &self.responses
    }

    pub fn source_meta(&self) -> Option<&[String]> {
        self.source_meta.as_deref()
    }

    pub fn embedding(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn embedding_f64(&self, id: usize) -> Vec<f64> {
        self.embedding(id).iter().map(|&x| f64::from(x)).collect()
    }

    /// Row-major `len × dim` matrix.
    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Mean of the stored embeddings, accumulated in `f64` in id order.
    pub fn mean_embedding(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.data.chunks_exact(self.dim) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += f64::from(x);
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn save(&self, records: &Path, embeddings: &Path) -> Result<(), AttackError> {
        let mut out = String::new();
        for (i, u) in self.responses.iter().enumerate() {
            let rec = Record {
                id: i as u64,
                text: u.raw().to_string(),
                source: self.source_meta.as_ref().map(|m| m[i].clone()),
            };
            out.push_str(&serde_json::to_string(&rec).map_err(|e| AttackError::Format(e.to_string()))?);
            out.push('\n');
        }
        fs::write(records, out).map_err(|e| AttackError::io(records, e))?;
        save_embeddings(embeddings, self.dim, &self.data)
    }

    /// Loads records and embeddings. Record ids must be `0, 1, 2, …` in file
    /// order.
    pub fn load(records: &Path, embeddings: &Path) -> Result<Self, AttackError> {
        let text = fs::read_to_string(records).map_err(|e| AttackError::io(records, e))?;
        let (responses, meta) = parse_records(&text)?;
        let (dim, data) = load_embeddings(embeddings)?;
        let db = Self::from_f32(responses, dim, data)?;
        match meta {
            Some(m) => db.with_source_meta(m),
            None => Ok(db),
        }
    }
}

fn parse_records(text: &str) -> Result<(Vec<Utterance>, Option<Vec<String>>), AttackError> {
    let mut responses = Vec::new();
    let mut meta = Vec::new();
    let mut any_meta = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(line).map_err(|e| AttackError::Format(format!("record line {}: {e}", lineno + 1)))?;
        if rec.id != responses.len() as u64 {
            return Err(AttackError::Format(format!(
                "record line {}: expected id {}, found {}",
                lineno + 1,
                responses.len(),
                rec.id
            )));
        }
        any_meta |= rec.source.is_some();
        meta.push(rec.source.unwrap_or_default());
        responses.push(tokenize(&rec.text));
    }
    Ok((responses, any_meta.then_some(meta)))
}

pub fn encode_embeddings(dim: usize, data: &[f32]) -> Vec<u8> {
    let count = data.len().checked_div(dim).unwrap_or(0);
    let mut out = Vec::with_capacity(16 + 4 * data.len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<f32>), AttackError> {
    let bad = |m: &str| AttackError::Format(format!("embedding file: {m}"));
    if bytes.len() < 16 || &bytes[..4] != EMB_MAGIC {
        return Err(bad("missing EMB1 header"));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(dim))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| bad("header sizes overflow"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(bad(&format!("expected {expected} data bytes, found {}", body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((dim, data))
}

pub fn save_embeddings(path: &Path, dim: usize, data: &[f32]) -> Result<(), AttackError> {
    let mut f = fs::File::create(path).map_err(|e| AttackError::io(path, e))?;
    f.write_all(&encode_embeddings(dim, data))
        .map_err(|e| AttackError::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<(usize, Vec<f32>), AttackError> {
    let bytes = fs::read(path).map_err(|e| AttackError::io(path, e))?;
    decode_embeddings(&bytes)
}
