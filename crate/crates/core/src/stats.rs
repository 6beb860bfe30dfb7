//! Descriptive statistics and correlation tests for score series.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{derive_seed, map_indexed, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined for a constant series")]
    Constant,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("permutation test needs at least 100 iterations, got {0}")]
    TooFewIterations(usize),
}

/// A labeled series of finite scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub label: String,
    values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::TooShort { needed: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(ScoreSeries {
            label: label.into(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub mean: f64,
    /// Sample standard deviation (divisor `len − 1`).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Percentage of values with `|x − mean| ≤ sd`.
    pub pct_within_1sd: f64,
    pub zero_sd: bool,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

pub fn describe(values: &[f64]) -> Result<Description, StatsError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let sd = sample_sd(values)?;
    let m = mean(values);
    let within = values.iter().filter(|x| (*x - m).abs() <= sd).count();
    Ok(Description {
        mean: m,
        sd,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        pct_within_1sd: 100.0 * within as f64 / values.len() as f64,
        zero_sd: sd == 0.0,
    })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn centered_pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    centered_pearson(x, y)
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the average-ranked series.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    centered_pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Pearson,
    Spearman,
}

pub fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    statistic: Statistic,
    iterations: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    permutation_p_value_with(x, y, statistic, iterations, seed, Execution::default())
}

/// Two-sided permutation test: `(1 + #{|stat(x, π y)| ≥ |stat(x, y)|}) / (iterations + 1)`.
///
/// Iteration `i` shuffles with its own generator seeded from `(seed, i)`, so
/// the result is the same under any schedule.
pub fn permutation_p_value_with(
    x: &[f64],
    y: &[f64],
    statistic: Statistic,
    iterations: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    if iterations < 100 {
        return Err(StatsError::TooFewIterations(iterations));
    }
    let (xs, ys) = match statistic {
        Statistic::Pearson => (x.to_vec(), y.to_vec()),
        Statistic::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let observed = centered_pearson(&xs, &ys)?.abs();
    // equal arrangements can differ in the last bits after reordering the sums
    let bar = observed - 1e-12 * observed.max(1e-300);
    let hits = map_indexed(exec, iterations, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0));
        let mut shuffled = ys.clone();
        shuffled.shuffle(&mut rng);
        centered_pearson(&xs, &shuffled)
            .map(|r| r.abs() >= bar)
            .unwrap_or(false)
    });
    let count = hits.iter().filter(|&&h| h).count();
    Ok((count + 1) as f64 / (iterations + 1) as f64)
}

/// Percentage of positions where `variant` is strictly greater than `original`.
pub fn pct_better(variant: &[f64], original: &[f64]) -> Result<f64, StatsError> {
    if variant.len() != original.len() {
        return Err(StatsError::LengthMismatch(variant.len(), original.len()));
    }
    if variant.is_empty() {
        return Err(StatsError::TooShort { needed: 1, got: 0 });
    }
    let better = variant.iter().zip(original).filter(|(v, o)| v > o).count();
    Ok(100.0 * better as f64 / variant.len() as f64)
}
