//! Whitebox attack on the scorer: a closed-form step in embedding space to
//! a target score, realized by nearest-neighbor lookup in a response
//! database, plus the exhaustive oracle.

mod db;
mod forest;

pub use db::{decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, ResponseDatabase};
pub use forest::{build_index, build_index_with, exact_neighbors, query_index, Neighbor, RpForestIndex};

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::dot;
use crate::par::{map_chunks, Execution};
use crate::scorer::{affine_form, AffineForm, ScorerError, ScorerParams};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("score does not depend on the candidate for this context and reference")]
    DegenerateAffine,
    #[error("{context}: expected dimension {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("response database is empty")]
    EmptyDatabase,
    #[error("{responses} responses but {embeddings} embeddings")]
    Misaligned { responses: usize, embeddings: usize },
    #[error("{0}")]
    Format(String),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AttackError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AttackError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn nondegenerate(c: &[f64], r: &[f64], params: &ScorerParams) -> Result<(AffineForm, f64), AttackError> {
    let form = affine_form(c, r, params)?;
    let aa = dot(&form.a, &form.a);
    if aa == 0.0 || !aa.is_finite() {
        return Err(AttackError::DegenerateAffine);
    }
    Ok((form, aa))
}

fn check_dim(what: &str, v: &[f64], expected: usize) -> Result<(), AttackError> {
    if v.len() != expected {
        return Err(AttackError::Dimension {
            context: what.into(),
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Minimum-norm move from `start` to the hyperplane `score = target`:
/// `start + ((target − score(start)) / a·a) a`.
///
/// The score is affine in the candidate, so this single step is exact up to
/// rounding; one correction step removes most of that rounding.
pub fn gradient_attack(
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    start: &[f64],
    target_score: f64,
) -> Result<Vec<f64>, AttackError> {
    check_dim("start embedding", start, params.dim())?;
    let (form, aa) = nondegenerate(c, r, params)?;
    let mut x = start.to_vec();
    for _ in 0..2 {
        let t = (target_score - form.eval(&x)) / aa;
        if t == 0.0 {
            break;
        }
        x.iter_mut().zip(&form.a).for_each(|(xi, ai)| *xi += t * ai);
    }
    Ok(x)
}

/// Fixed-step descent on `(score − target)²`, for scorers where the closed
/// form does not apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeAttack {
    pub step_size: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for IterativeAttack {
    fn default() -> Self {
        IterativeAttack {
            step_size: 0.1,
            max_iterations: 1000,
            tolerance: 1e-9,
        }
    }
}

/// Returns the final embedding and the number of iterations used.
pub fn gradient_attack_iterative(
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    start: &[f64],
    target_score: f64,
    config: &IterativeAttack,
) -> Result<(Vec<f64>, usize), AttackError> {
    check_dim("start embedding", start, params.dim())?;
    if !config.step_size.is_finite() || config.step_size <= 0.0 {
        return Err(AttackError::Config("step size must be positive".into()));
    }
    let (form, _) = nondegenerate(c, r, params)?;
    let mut x = start.to_vec();
    for it in 0..config.max_iterations {
        let err = form.eval(&x) - target_score;
        if err.abs() < config.tolerance {
            return Ok((x, it));
        }
        let g = 2.0 * err * config.step_size;
        x.iter_mut().zip(&form.a).for_each(|(xi, ai)| *xi -= g * ai);
    }
    Ok((x, config.max_iterations))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredNeighbor {
    pub id: usize,
    pub distance: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub target_score: f64,
    pub achieved_embedding: Vec<f64>,
    pub achieved_exact_score: f64,
    /// Ranked by distance to the achieved embedding.
    pub neighbors: Vec<ScoredNeighbor>,
    pub best_id: usize,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizeConfig {
    pub k: usize,
    pub search_budget: usize,
    /// Starting embedding; the database mean when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        RealizeConfig {
            k: 400,
            search_budget: 4000,
            start: None,
        }
    }
}

/// Moves to the target score, then scores the `k` approximate neighbors of
/// the attacked embedding. Stored embeddings are scored as `f32` rows, the
/// same way [`brute_force_attack`] scores them.
pub fn realize_attack(
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    db: &ResponseDatabase,
    index: &RpForestIndex,
    target_score: f64,
    config: &RealizeConfig,
) -> Result<AttackResult, AttackError> {
    let start = config.start.clone().unwrap_or_else(|| db.mean_embedding());
    let achieved = gradient_attack(c, r, params, &start, target_score)?;
    let form = affine_form(c, r, params)?;
    let neighbors: Vec<ScoredNeighbor> = query_index(index, db, &achieved, config.k, config.search_budget)?
        .into_iter()
        .map(|n| ScoredNeighbor {
            id: n.id,
            distance: n.distance,
            score: form.eval_f32(db.embedding(n.id)),
        })
        .collect();
    let best = neighbors
        .iter()
        .fold(None::<&ScoredNeighbor>, |best, n| match best {
            Some(b) if b.score > n.score || (b.score == n.score && b.id < n.id) => Some(b),
            _ => Some(n),
        })
        .ok_or(AttackError::EmptyDatabase)?;
    Ok(AttackResult {
        target_score,
        achieved_exact_score: form.eval(&achieved),
        achieved_embedding: achieved,
        best_id: best.id,
        best_score: best.score,
        neighbors,
    })
}

pub fn brute_force_attack(
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    db: &ResponseDatabase,
) -> Result<(usize, f64), AttackError> {
    brute_force_attack_with(c, r, params, db, Execution::default())
}

/// Exact argmax of the score over the database, lowest id on ties.
pub fn brute_force_attack_with(
    c: &[f64],
    r: &[f64],
    params: &ScorerParams,
    db: &ResponseDatabase,
    exec: Execution,
) -> Result<(usize, f64), AttackError> {
    if db.is_empty() {
        return Err(AttackError::EmptyDatabase);
    }
    check_dim("context", c, db.dim())?;
    let form = affine_form(c, r, params)?;
    let better = |a: (usize, f64), b: (usize, f64)| if b.1 > a.1 { b } else { a };
    let chunk_best = map_chunks(exec, db.len(), 4096, |range| {
        range
            .map(|i| (i, form.eval_f32(db.embedding(i))))
            .reduce(better)
            .expect("chunks are non-empty")
    });
    Ok(chunk_best.into_iter().reduce(better).expect("database is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::SentenceEmbedding;
    use crate::text::tokenize;

    fn identity() -> ScorerParams {
        ScorerParams::identity(2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_example() {
        let x = gradient_attack(&[1.0, 0.0], &[0.0, 1.0], &identity(), &[1.0, 1.0], 4.0).unwrap();
        assert_eq!(x, vec![2.0, 2.0]);
        let same = gradient_attack(&[1.0, 0.0], &[0.0, 1.0], &identity(), &[1.0, 1.0], 2.0).unwrap();
        assert_eq!(same, vec![1.0, 1.0]);
        assert!(matches!(
            gradient_attack(&[0.0, 0.0], &[0.0, 0.0], &identity(), &[1.0, 1.0], 4.0),
            Err(AttackError::DegenerateAffine)
        ));
    }

    #[test]
    fn iterative_mode_converges_to_same_score() {
        let (x, iters) = gradient_attack_iterative(
            &[1.0, 0.0],
            &[0.0, 1.0],
            &identity(),
            &[1.0, 1.0],
            4.0,
            &IterativeAttack::default(),
        )
        .unwrap();
        assert!(iters < 1000);
        assert!((x[0] + x[1] - 4.0).abs() < 1e-9);
    }

    fn db_of(rows: &[[f64; 2]]) -> ResponseDatabase {
        let embs: Vec<SentenceEmbedding> = rows.iter().map(|r| SentenceEmbedding::new(r.to_vec())).collect();
        ResponseDatabase::new((0..rows.len()).map(|i| tokenize(&format!("r{i}"))).collect(), &embs).unwrap()
    }

    #[test]
    fn brute_force_ties_take_lowest_id() {
        let db = db_of(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0]]);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let best = brute_force_attack_with(&[1.0, 0.0], &[0.0, 1.0], &identity(), &db, exec).unwrap();
            assert_eq!(best, (1, 2.0));
        }
        let single = db_of(&[[3.0, -1.0]]);
        assert_eq!(
            brute_force_attack(&[1.0, 0.0], &[0.0, 1.0], &identity(), &single).unwrap(),
            (0, 2.0)
        );
    }

    #[test]
    fn planted_optimum_is_found() {
        // mean of the database is (1, 1); target 4 lands at (2, 2)
        let db = db_of(&[[0.0, 0.0], [2.0, 2.0], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0]]);
        let index = build_index(&db, 3, 2, 5).unwrap();
        let res = realize_attack(
            &[1.0, 0.0],
            &[0.0, 1.0],
            &identity(),
            &db,
            &index,
            4.0,
            &RealizeConfig::default(),
        )
        .unwrap();
        assert_eq!(res.best_id, 1);
        assert!((res.best_score - 4.0).abs() < 1e-9);
        assert!((res.achieved_exact_score - 4.0).abs() < 1e-9);
        assert_eq!(res.neighbors.len(), 5);
        assert_eq!(res.neighbors[0].id, 1);
        let (_, brute) = brute_force_attack(&[1.0, 0.0], &[0.0, 1.0], &identity(), &db).unwrap();
        assert!(brute >= res.best_score);
    }
}
