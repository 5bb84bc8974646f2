//! Small numeric helpers shared by the inference modules.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Upper `p` point of the standard normal distribution.
pub fn normal_upper(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - p)
}

/// Summary of a set of Monte Carlo draws of one scalar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub variance: f64,
    /// Monte Carlo standard error of `mean` (batch means).
    pub mean_se: f64,
    /// Monte Carlo standard error of `variance`.
    pub variance_se: f64,
    pub ci: [f64; 2],
}

impl DrawSummary {
    /// Summarizes draws with a central `1 - alpha` interval from empirical quantiles.
    ///
    /// Standard errors use 50 batch means so that autocorrelated chains are not
    /// treated as independent samples.
    pub fn from_draws(draws: &[f64], alpha: f64) -> Self {
        let mean = mean(draws);
        let variance = sample_variance(draws);
        let batches = 50.min(draws.len());
        let size = draws.len() / batches;
        let batch_means: Vec<f64> = (0..batches)
            .map(|b| self::mean(&draws[b * size..(b + 1) * size]))
            .collect();
        let mean_se = (sample_variance(&batch_means) / batches as f64).sqrt();
        let batch_vars: Vec<f64> = (0..batches)
            .map(|b| {
                let chunk = &draws[b * size..(b + 1) * size];
                chunk.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / chunk.len() as f64
            })
            .collect();
        let variance_se = (sample_variance(&batch_vars) / batches as f64).sqrt();
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        let ci = [
            quantile_sorted(&sorted, alpha / 2.0),
            quantile_sorted(&sorted, 1.0 - alpha / 2.0),
        ];
        Self {
            mean,
            variance,
            mean_se,
            variance_se,
            ci,
        }
    }
}
