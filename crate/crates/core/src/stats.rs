//! Small numeric helpers shared by the estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pairwise (cascade) summation. The result depends only on the input order,
/// never on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / values.len() as f64).sqrt()
}

/// Sample standard deviation (divides by `n - 1`).
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / (values.len() - 1) as f64).sqrt()
}

/// `ln Σ exp(x_i)`, stable for large magnitudes.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and spread of per-sample values under bootstrap resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub std: f64,
    pub n_folds: usize,
}

/// Resamples `values` with replacement `n_folds` times and summarises the fold
/// means. Requires `n_folds >= 2` and non-empty input (checked by callers).
pub fn bootstrap_means(values: &[f64], n_folds: usize, seed: u64) -> BootstrapSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut fold_means = Vec::with_capacity(n_folds);
    let mut draw = vec![0.0; n];
    for _ in 0..n_folds {
        for slot in draw.iter_mut() {
            *slot = values[rng.random_range(0..n)];
        }
        fold_means.push(mean(&draw));
    }
    BootstrapSummary {
        mean: mean(&fold_means),
        std: sample_std(&fold_means),
        n_folds,
    }
}
