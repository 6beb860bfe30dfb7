//! Embedding-space diagnostics: alignment to mean, conicity, spread
//! summaries, and the line scan that exhibits the affine score profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::SentenceEmbedding;
use crate::linalg::{cosine, dot, mean_vector, norm};
use crate::par::{derive_seed, map_chunks, map_indexed, Execution};
use crate::scorer::{score, ScorerError, ScorerParams};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("embedding set is empty")]
    EmptySet,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("alignment undefined: mean vector is zero")]
    ZeroMean,
    #[error("alignment undefined: vector {0} is zero")]
    ZeroVector(usize),
    #[error("line scan needs at least 2 steps")]
    TooFewSteps,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Sets larger than this use a sampled estimate of the mean pairwise cosine.
pub const EXACT_PAIRWISE_LIMIT: usize = 2000;

/// A non-empty set of equal-length vectors together with its mean.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    vectors: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        let first = vectors.first().ok_or(GeometryError::EmptySet)?;
        let dim = first.len();
        if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(GeometryError::Dimension {
                index,
                expected: dim,
                found: v.len(),
            });
        }
        let mean = mean_vector(&vectors);
        Ok(EmbeddingSet { vectors, mean })
    }

    pub fn from_embeddings(embeddings: &[SentenceEmbedding]) -> Result<Self, GeometryError> {
        Self::new(embeddings.iter().map(|e| e.as_slice().to_vec()).collect())
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Cosine between `v` and the mean of `set`.
pub fn atm(v: &[f64], set: &EmbeddingSet) -> Result<f64, GeometryError> {
    if norm(set.mean()) == 0.0 {
        return Err(GeometryError::ZeroMean);
    }
    cosine(v, set.mean()).ok_or(GeometryError::ZeroVector(0))
}

fn all_atms(set: &EmbeddingSet) -> Result<Vec<f64>, GeometryError> {
    if norm(set.mean()) == 0.0 {
        return Err(GeometryError::ZeroMean);
    }
    set.vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| cosine(v, set.mean()).ok_or(GeometryError::ZeroVector(i)))
        .collect()
}

/// Mean alignment to mean over the set.
pub fn conicity(set: &EmbeddingSet) -> Result<f64, GeometryError> {
    let atms = all_atms(set)?;
    Ok(atms.iter().sum::<f64>() / atms.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub conicity: f64,
    pub atm_mean: f64,
    pub atm_min: f64,
    pub atm_max: f64,
    pub pairwise_cosine_mean: f64,
    pub count: usize,
    pub dim: usize,
}

pub fn spread_report(set: &EmbeddingSet, seed: u64) -> Result<SpreadReport, GeometryError> {
    spread_report_with(set, seed, Execution::default())
}

/// Alignment summary plus the mean cosine over ordered pairs of distinct
/// members. Exact up to [`EXACT_PAIRWISE_LIMIT`] vectors; above that, the
/// mean over `EXACT_PAIRWISE_LIMIT²` seeded random ordered pairs.
pub fn spread_report_with(set: &EmbeddingSet, seed: u64, exec: Execution) -> Result<SpreadReport, GeometryError> {
    let atms = all_atms(set)?;
    let count = set.len();
    let atm_mean = atms.iter().sum::<f64>() / count as f64;
    let atm_min = atms.iter().copied().fold(f64::INFINITY, f64::min);
    let atm_max = atms.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let unit: Vec<Vec<f64>> = set
        .vectors()
        .iter()
        .map(|v| {
            let n = norm(v);
            v.iter().map(|x| x / n).collect()
        })
        .collect();
    let pairwise_cosine_mean = if count < 2 {
        1.0
    } else if count <= EXACT_PAIRWISE_LIMIT {
        exact_pairwise_mean(&unit, exec)
    } else {
        sampled_pairwise_mean(&unit, seed, EXACT_PAIRWISE_LIMIT * EXACT_PAIRWISE_LIMIT, exec)
    };

    Ok(SpreadReport {
        conicity: atm_mean,
        atm_mean,
        atm_min,
        atm_max,
        pairwise_cosine_mean,
        count,
        dim: set.dim(),
    })
}

fn exact_pairwise_mean(unit: &[Vec<f64>], exec: Execution) -> f64 {
    let n = unit.len();
    let rows = map_indexed(exec, n, |i| {
        unit[i + 1..]
            .iter()
            .map(|v| dot(&unit[i], v).clamp(-1.0, 1.0))
            .sum::<f64>()
    });
    2.0 * rows.iter().sum::<f64>() / (n * (n - 1)) as f64
}

fn sampled_pairwise_mean(unit: &[Vec<f64>], seed: u64, pairs: usize, exec: Execution) -> f64 {
    const CHUNK: usize = 1 << 16;
    let n = unit.len();
    let sums = map_chunks(exec, pairs, CHUNK, |range| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (range.start / CHUNK) as u64, 0));
        let mut acc = 0.0;
        for _ in range {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            acc += dot(&unit[i], &unit[j]).clamp(-1.0, 1.0);
        }
        acc
    });
    sums.iter().sum::<f64>() / pairs as f64
}

/// Scores sampled along the segment from `start` to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineScanResult {
    pub deltas: Vec<f64>,
    pub scores: Vec<f64>,
    /// Largest absolute deviation of the scores from their least-squares line.
    pub max_affine_residual: f64,
    /// Euclidean length of `end − start`.
    pub step_magnitude: f64,
}

impl LineScanResult {
    /// True when every sampled score is at least `threshold`.
    pub fn all_at_least(&self, threshold: f64) -> bool {
        self.scores.iter().all(|&s| s >= threshold)
    }
}

pub fn line_scan(
    start: &[f64],
    end: &[f64],
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    steps: usize,
) -> Result<LineScanResult, GeometryError> {
    if steps < 2 {
        return Err(GeometryError::TooFewSteps);
    }
    if start.len() != end.len() {
        return Err(ScorerError::DimensionMismatch {
            expected: start.len(),
            found: end.len(),
        }
        .into());
    }
    let diff: Vec<f64> = end.iter().zip(start).map(|(e, s)| e - s).collect();
    let deltas: Vec<f64> = (0..steps).map(|k| k as f64 / (steps - 1) as f64).collect();
    let scores = deltas
        .iter()
        .map(|&d| {
            let point: Vec<f64> = start.iter().zip(&diff).map(|(s, g)| s + d * g).collect();
            score(c, r, &point, params)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LineScanResult {
        max_affine_residual: max_line_residual(&deltas, &scores),
        step_magnitude: norm(&diff),
        deltas,
        scores,
    })
}

fn max_line_residual(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    x.iter()
        .zip(y)
        .map(|(a, b)| (b - (my + slope * (a - mx))).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn set(v: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::new(v.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    #[test]
    fn atm_examples() {
        assert_eq!(atm(&[1.0, 0.0], &set(&[&[1.0, 0.0], &[1.0, 0.0]])).unwrap(), 1.0);
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((atm(&[1.0, 0.0], &s).unwrap() - SQRT_HALF).abs() < 1e-6);
        let degenerate = set(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert!(matches!(atm(&[1.0, 0.0], &degenerate), Err(GeometryError::ZeroMean)));
        assert!(matches!(conicity(&degenerate), Err(GeometryError::ZeroMean)));
        assert!(matches!(atm(&[0.0, 0.0], &s), Err(GeometryError::ZeroVector(_))));
    }

    #[test]
    fn set_validation() {
        assert!(matches!(EmbeddingSet::new(vec![]), Err(GeometryError::EmptySet)));
        assert!(matches!(
            EmbeddingSet::new(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(GeometryError::Dimension { index: 1, .. })
        ));
    }

    #[test]
    fn conicity_examples() {
        let same = set(&[&[0.3, -2.0, 1.0][..]; 5]);
        assert!((conicity(&same).unwrap() - 1.0).abs() < 1e-12);
        let ortho = set(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((conicity(&ortho).unwrap() - SQRT_HALF).abs() < 1e-6);
        // a zero member makes its alignment undefined
        assert!(matches!(
            conicity(&set(&[&[1.0, 0.0], &[0.0, 0.0]])),
            Err(GeometryError::ZeroVector(1))
        ));
    }

    #[test]
    fn spread_examples() {
        let same = spread_report(&set(&[&[1.0, 2.0][..]; 4]), 0).unwrap();
        assert!((same.conicity - 1.0).abs() < 1e-12);
        assert!((same.pairwise_cosine_mean - 1.0).abs() < 1e-12);
        let ortho = spread_report(&set(&[&[1.0, 0.0], &[0.0, 1.0]]), 0).unwrap();
        assert_eq!(ortho.pairwise_cosine_mean, 0.0);
        assert!((ortho.conicity - SQRT_HALF).abs() < 1e-6);
        assert_eq!((ortho.count, ortho.dim), (2, 2));
        assert!(ortho.atm_min <= ortho.atm_mean && ortho.atm_mean <= ortho.atm_max);
    }

    #[test]
    fn spread_json_keys() {
        let rep = spread_report(&set(&[&[1.0, 0.0], &[0.0, 1.0]]), 0).unwrap();
        let v = serde_json::to_value(rep).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "conicity",
            "atm_mean",
            "atm_min",
            "atm_max",
            "pairwise_cosine_mean",
            "count",
            "dim",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn line_scan_examples() {
        let p = ScorerParams::identity(2, 0.0, 1.0).unwrap();
        let (c, r) = ([1.0, 0.0], [0.0, 1.0]);
        let scan = line_scan(&[1.0, 1.0], &[3.0, 1.0], &c, &r, &p, 3).unwrap();
        assert_eq!(scan.scores, [2.0, 3.0, 4.0]);
        assert_eq!(scan.deltas, [0.0, 0.5, 1.0]);
        assert_eq!(scan.step_magnitude, 2.0);
        assert!(scan.max_affine_residual < 1e-12);

        let flat = line_scan(&[1.0, 1.0], &[1.0, 1.0], &c, &r, &p, 5).unwrap();
        assert!(flat.scores.iter().all(|&s| s == 2.0));
        assert_eq!(flat.max_affine_residual, 0.0);

        assert!(matches!(
            line_scan(&[1.0, 1.0], &[1.0, 1.0], &c, &r, &p, 1),
            Err(GeometryError::TooFewSteps)
        ));
        assert!(line_scan(&[1.0], &[1.0, 1.0], &c, &r, &p, 3).is_err());
    }

    #[test]
    fn residual_detects_curvature() {
        let x = [0.0, 0.5, 1.0];
        assert!(max_line_residual(&x, &[0.0, 1.0, 0.0]) > 0.3);
        assert!(max_line_residual(&x, &[1.0, 2.0, 3.0]) < 1e-15);
    }
}
