use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Linear interpolation between order statistics (R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap resample means: each resample draws `n` indices with
/// `gen_range(0..n)` from a ChaCha8 stream seeded with `seed`.
pub fn bootstrap_means(values: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..resamples).map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64).collect()
}

/// Percentile bootstrap interval around the sample mean. The bounds are
/// widened to include the mean if a skewed resample distribution would
/// leave it outside.
pub fn confidence_interval(values: &[f64], level: f64, seed: u64) -> Result<ConfidenceInterval, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::InsufficientData { needed: 2, got: values.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut means = bootstrap_means(values, BOOTSTRAP_RESAMPLES, seed);
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lower = quantile_sorted(&means, alpha).min(mean);
    let upper = quantile_sorted(&means, 1.0 - alpha).max(mean);
    Ok(ConfidenceInterval { mean, lower, upper, level })
}
