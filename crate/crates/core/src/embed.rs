//! Word-vector tables, pooled sentence encoders and the embedding-based
//! similarity baselines (average, greedy matching, vector extrema).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::cosine;
use crate::text::{read_file, TextError, Utterance};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Io(#[from] TextError),
    #[error("embedding line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file has no vectors, dimension cannot be determined")]
    Empty,
    #[error("cosine undefined: `{0}` has no in-vocabulary token")]
    EmptyEncoding(String),
}

/// Token → vector lookup with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Inserts or replaces a vector. Panics on a dimension mismatch.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Option<Vec<f64>> {
        assert_eq!(vector.len(), self.dim, "vector dimension mismatch");
        self.entries.insert(token.into(), vector)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    parse_embedding_table(&read_file(path)?)
}

/// Parses `token v1 … vn` lines. A repeated token keeps its last vector.
pub fn parse_embedding_table(text: &str) -> Result<EmbeddingTable, EmbedError> {
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let vector = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| EmbedError::Parse {
                    line: lineno,
                    message: format!("non-numeric component `{f}`"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vector.is_empty() {
            return Err(EmbedError::Parse {
                line: lineno,
                message: format!("token `{token}` has no components"),
            });
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != table.dim {
            return Err(EmbedError::Parse {
                line: lineno,
                message: format!("expected {} components, found {}", table.dim, vector.len()),
            });
        }
        if table.insert(token, vector).is_some() {
            log::warn!("embedding line {lineno}: duplicate token `{token}`, keeping the last vector");
        }
    }
    table.ok_or(EmbedError::Empty)
}

/// A fixed-dimension utterance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    vector: Vec<f64>,
    empty: bool,
}

impl SentenceEmbedding {
    pub fn new(vector: Vec<f64>) -> Self {
        SentenceEmbedding { vector, empty: false }
    }

    pub fn zero(dim: usize) -> Self {
        SentenceEmbedding {
            vector: vec![0.0; dim],
            empty: true,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// True when no token of the source utterance had a vector.
    pub fn is_empty(&self) -> bool {
        self.empty
    }
}

impl AsRef<[f64]> for SentenceEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.vector
    }
}

impl From<Vec<f64>> for SentenceEmbedding {
    fn from(v: Vec<f64>) -> Self {
        SentenceEmbedding::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
    /// Per-dimension value of largest magnitude, sign kept.
    Extrema,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Sum => "sum",
            Pooling::Extrema => "extrema",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "sum" => Ok(Pooling::Sum),
            "extrema" => Ok(Pooling::Extrema),
            _ => Err(format!("unknown encoder `{s}` (expected mean, sum or extrema)")),
        }
    }
}

/// Pools the vectors of the in-vocabulary tokens of `utterance`.
///
/// Vectors are accumulated in sorted token order, so the result depends only
/// on the multiset of tokens and is bit-identical under any reordering.
pub fn encode(utterance: &Utterance, table: &EmbeddingTable, pooling: Pooling) -> SentenceEmbedding {
    encode_tokens(utterance.tokens(), table, pooling)
}

fn encode_tokens(tokens: &[String], table: &EmbeddingTable, pooling: Pooling) -> SentenceEmbedding {
    let mut found: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| table.contains(t))
        .collect();
    if found.is_empty() {
        return SentenceEmbedding::zero(table.dim());
    }
    found.sort_unstable();

    let dim = table.dim();
    let vectors = found.iter().map(|t| table.get(t).expect("filtered above"));
    let vector = match pooling {
        Pooling::Mean | Pooling::Sum => {
            let mut acc = vec![0.0; dim];
            for v in vectors {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            if pooling == Pooling::Mean {
                let count = found.len() as f64;
                acc.iter_mut().for_each(|a| *a /= count);
            }
            acc
        }
        Pooling::Extrema => {
            let mut acc = vec![0.0f64; dim];
            let mut first = true;
            for v in vectors {
                for (a, &x) in acc.iter_mut().zip(v) {
                    // equal magnitudes resolve to the larger value so the
                    // outcome is independent of visiting order
                    let replace = first || x.abs() > a.abs() || (x.abs() == a.abs() && x.total_cmp(a).is_gt());
                    if replace {
                        *a = x;
                    }
                }
                first = false;
            }
            acc
        }
    };
    SentenceEmbedding::new(vector)
}

/// Flattens the context turns and pools them as one token sequence.
pub fn encode_context(turns: &[Utterance], table: &EmbeddingTable, pooling: Pooling) -> SentenceEmbedding {
    let tokens: Vec<String> = turns.iter().flat_map(|t| t.tokens().iter().cloned()).collect();
    encode_tokens(&tokens, table, pooling)
}

fn pooled_cosine(a: &Utterance, b: &Utterance, table: &EmbeddingTable, pooling: Pooling) -> Result<f64, EmbedError> {
    let ea = encode(a, table, pooling);
    let eb = encode(b, table, pooling);
    for (e, u) in [(&ea, a), (&eb, b)] {
        if e.is_empty() {
            return Err(EmbedError::EmptyEncoding(u.canonical()));
        }
    }
    // a non-empty pooled vector can still be zero (e.g. all-zero word vectors)
    cosine(ea.as_slice(), eb.as_slice()).ok_or_else(|| EmbedError::EmptyEncoding(a.canonical()))
}

/// Cosine of the MEAN encodings.
pub fn embedding_average_similarity(a: &Utterance, b: &Utterance, table: &EmbeddingTable) -> Result<f64, EmbedError> {
    pooled_cosine(a, b, table, Pooling::Mean)
}

/// Cosine of the EXTREMA encodings.
pub fn extrema_similarity(a: &Utterance, b: &Utterance, table: &EmbeddingTable) -> Result<f64, EmbedError> {
    pooled_cosine(a, b, table, Pooling::Extrema)
}

/// Symmetrized greedy matching: each in-vocabulary token is matched to the
/// most similar token on the other side, the per-side averages are averaged.
pub fn greedy_match_similarity(a: &Utterance, b: &Utterance, table: &EmbeddingTable) -> Result<f64, EmbedError> {
    let vecs = |u: &Utterance| -> Result<Vec<&[f64]>, EmbedError> {
        let v: Vec<&[f64]> = u.tokens().iter().filter_map(|t| table.get(t)).collect();
        if v.is_empty() {
            Err(EmbedError::EmptyEncoding(u.canonical()))
        } else {
            Ok(v)
        }
    };
    let va = vecs(a)?;
    let vb = vecs(b)?;
    let one_way = |from: &[&[f64]], to: &[&[f64]]| -> f64 {
        let total: f64 = from
            .iter()
            .map(|x| {
                to.iter()
                    .map(|y| cosine(x, y).unwrap_or(0.0))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        total / from.len() as f64
    };
    Ok(((one_way(&va, &vb) + one_way(&vb, &va)) / 2.0).clamp(-1.0, 1.0))
}
