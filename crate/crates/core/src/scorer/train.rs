//! Full-batch gradient descent on
//!
//! ```text
//! L = Σᵢ (score(cᵢ, rᵢ, r̂ᵢ) − humanᵢ)² + γ (‖M‖²_F + ‖N‖²_F)
//! ```
//!
//! `α` and `β` stay fixed at their initial values; only `M` and `N` move.

use super::{calibrate, score, ScorerError, ScorerParams};
use crate::linalg::dot;

/// One supervised example, already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub context: Vec<f64>,
    pub reference: Vec<f64>,
    pub candidate: Vec<f64>,
    pub human: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// L2 weight on the squared Frobenius norms of `M` and `N`.
    pub gamma: f64,
    pub step_size: f64,
    pub epochs: usize,
    /// Recorded for provenance. Full-batch descent draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.01,
            step_size: 0.01,
            epochs: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    /// Loss of the starting parameters.
    pub initial_loss: f64,
    /// Loss after each epoch's update.
    pub losses: Vec<f64>,
}

/// Identity matrices with `α`, `β` calibrated on the identity model's raw
/// scores `cᵀr̂ + rᵀr̂` over the dataset.
pub fn initial_params(dataset: &[TrainSample]) -> Result<ScorerParams, ScorerError> {
    let first = dataset.first().ok_or(ScorerError::EmptyDataset)?;
    let raw: Vec<f64> = dataset
        .iter()
        .map(|s| dot(&s.context, &s.candidate) + dot(&s.reference, &s.candidate))
        .collect();
    let (alpha, beta) = calibrate(&raw)?;
    ScorerParams::identity(first.context.len(), alpha, beta)
}

/// `1 / (2 (trace(XᵀX) + γ))` for the design matrix `X` of the dataset at
/// the given `β`. The loss has Hessian `2 (XᵀX + γI)` and the trace bounds
/// its top eigenvalue, so descent with this step (or any smaller one) never
/// increases the loss.
pub fn stable_step_size(dataset: &[TrainSample], beta: f64, gamma: f64) -> Result<f64, ScorerError> {
    if dataset.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    if beta == 0.0 {
        return Err(ScorerError::ZeroBeta);
    }
    let trace: f64 = dataset
        .iter()
        .map(|s| (dot(&s.context, &s.context) + dot(&s.reference, &s.reference)) * dot(&s.candidate, &s.candidate))
        .sum::<f64>()
        / (beta * beta);
    Ok(0.5 / (trace + gamma))
}

fn loss(dataset: &[TrainSample], params: &ScorerParams, gamma: f64) -> Result<f64, ScorerError> {
    let mut total = 0.0;
    for s in dataset {
        let e = score(&s.context, &s.reference, &s.candidate, params)? - s.human;
        total += e * e;
    }
    Ok(total + gamma * (params.m().frobenius_sq() + params.n().frobenius_sq()))
}

pub fn train(dataset: &[TrainSample], config: &TrainConfig, init: ScorerParams) -> Result<TrainOutcome, ScorerError> {
    if dataset.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    if !config.step_size.is_finite() || config.step_size <= 0.0 || !config.gamma.is_finite() || config.gamma < 0.0 {
        return Err(ScorerError::Config(format!(
            "step_size must be positive and gamma nonnegative (got {}, {})",
            config.step_size, config.gamma
        )));
    }
    let n = init.dim();
    let beta = init.beta();
    let mut params = init;
    let initial_loss = loss(dataset, &params, config.gamma)?;
    let mut losses = Vec::with_capacity(config.epochs);
    let mut previous = initial_loss;
    let mut rising = 0;
    let mut grad_m = vec![0.0; n * n];
    let mut grad_n = vec![0.0; n * n];

    for epoch in 0..config.epochs {
        grad_m.iter_mut().for_each(|g| *g = 0.0);
        grad_n.iter_mut().for_each(|g| *g = 0.0);
        for s in dataset {
            let e = score(&s.context, &s.reference, &s.candidate, &params)? - s.human;
            let w = 2.0 * e / beta;
            for i in 0..n {
                let (wc, wr) = (w * s.context[i], w * s.reference[i]);
                let gm = &mut grad_m[i * n..(i + 1) * n];
                let gn = &mut grad_n[i * n..(i + 1) * n];
                for j in 0..n {
                    gm[j] += wc * s.candidate[j];
                    gn[j] += wr * s.candidate[j];
                }
            }
        }
        let (m, nm) = params.matrices_mut();
        for (mat, grad) in [(m, &grad_m), (nm, &grad_n)] {
            for (x, g) in mat.as_mut_slice().iter_mut().zip(grad.iter()) {
                *x -= config.step_size * (g + 2.0 * config.gamma * *x);
            }
        }

        let current = loss(dataset, &params, config.gamma)?;
        if !current.is_finite() {
            return Err(ScorerError::Diverged { epoch, loss: current });
        }
        // rounding noise around a converged loss is not a rise
        let slack = 1e-10 * previous.abs().max(1e-10);
        rising = if current > previous + slack { rising + 1 } else { 0 };
        if rising >= 5 {
            return Err(ScorerError::Diverged { epoch, loss: current });
        }
        losses.push(current);
        previous = current;
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        losses,
    })
}
