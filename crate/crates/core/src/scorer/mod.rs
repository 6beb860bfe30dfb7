//! The bilinear response scorer
//!
//! ```text
//! score(c, r, r̂) = (cᵀ M r̂ + rᵀ N r̂ − α) / β
//! ```
//!
//! For a fixed context `c` and reference `r` the score is affine in the
//! candidate: `score = a·r̂ − b` with `a = (Mᵀc + Nᵀr)/β` and `b = α/β`.
//! [`affine_form`] exposes that decomposition; the geometry diagnostics and
//! the whitebox attack are built on it.

mod io;
mod train;

pub use io::{load_params, parse_params, save_params, write_params};
pub use train::{initial_params, stable_step_size, train, TrainConfig, TrainOutcome, TrainSample};

use thiserror::Error;

use crate::linalg::{dot, Matrix};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("beta must be nonzero")]
    ZeroBeta,
    #[error("calibration needs at least 2 raw scores, got {0}")]
    TooFewScores(usize),
    #[error("raw scores have zero variance; set beta manually")]
    ZeroVariance,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss increased for 5 consecutive epochs (epoch {epoch}, loss {loss}); use a smaller step size")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("scorer file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("scorer file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Learned parameters `M`, `N`, `α`, `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    m: Matrix,
    n: Matrix,
    alpha: f64,
    beta: f64,
}

impl ScorerParams {
    pub fn new(m: Matrix, n: Matrix, alpha: f64, beta: f64) -> Result<Self, ScorerError> {
        if m.dim() != n.dim() {
            return Err(ScorerError::DimensionMismatch {
                expected: m.dim(),
                found: n.dim(),
            });
        }
        if beta == 0.0 || !beta.is_finite() {
            return Err(ScorerError::ZeroBeta);
        }
        Ok(ScorerParams { m, n, alpha, beta })
    }

    /// `M = N = I` with the given offsets.
    pub fn identity(dim: usize, alpha: f64, beta: f64) -> Result<Self, ScorerError> {
        Self::new(Matrix::identity(dim), Matrix::identity(dim), alpha, beta)
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn n(&self) -> &Matrix {
        &self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub(crate) fn matrices_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.m, &mut self.n)
    }

    fn check(&self, v: &[f64]) -> Result<(), ScorerError> {
        if v.len() != self.dim() {
            return Err(ScorerError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }
}

/// `score = a·r̂ − b` for a fixed context and reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AffineForm {
    pub fn eval(&self, candidate: &[f64]) -> f64 {
        dot(&self.a, candidate) - self.b
    }

    /// Same as [`AffineForm::eval`] for single-precision storage.
    pub fn eval_f32(&self, candidate: &[f32]) -> f64 {
        self.a
            .iter()
            .zip(candidate)
            .map(|(a, &x)| a * f64::from(x))
            .sum::<f64>()
            - self.b
    }
}

pub fn score(c: &[f64], r: &[f64], candidate: &[f64], params: &ScorerParams) -> Result<f64, ScorerError> {
    params.check(c)?;
    params.check(r)?;
    params.check(candidate)?;
    let raw = params.m.bilinear(c, candidate) + params.n.bilinear(r, candidate);
    Ok((raw - params.alpha) / params.beta)
}

pub fn affine_form(c: &[f64], r: &[f64], params: &ScorerParams) -> Result<AffineForm, ScorerError> {
    params.check(c)?;
    params.check(r)?;
    let mc = params.m.transpose_mul_vec(c);
    let nr = params.n.transpose_mul_vec(r);
    let a = mc.iter().zip(&nr).map(|(x, y)| (x + y) / params.beta).collect();
    Ok(AffineForm {
        a,
        b: params.alpha / params.beta,
    })
}

/// `∂score/∂r̂`, which is the `a` of the affine form and does not depend on
/// the candidate.
pub fn score_gradient(c: &[f64], r: &[f64], params: &ScorerParams) -> Result<Vec<f64>, ScorerError> {
    affine_form(c, r, params).map(|f| f.a)
}

/// Chooses `β` = sample SD and `α = mean − 3β` so the calibrated scores
/// `(raw − α)/β` have mean 3 and sample SD 1.
pub fn calibrate(raw_scores: &[f64]) -> Result<(f64, f64), ScorerError> {
    let k = raw_scores.len();
    if k < 2 {
        return Err(ScorerError::TooFewScores(k));
    }
    let mean = raw_scores.iter().sum::<f64>() / k as f64;
    let var = raw_scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let beta = var.sqrt();
    if beta == 0.0 || !beta.is_finite() {
        return Err(ScorerError::ZeroVariance);
    }
    Ok((mean - 3.0 * beta, beta))
}
