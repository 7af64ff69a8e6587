//! Least-squares drift and circular block bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Returns (slope, intercept), or `None` with fewer than two distinct x values.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        sxy += dx * (y[i] - my);
        sxx += dx * dx;
    }
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    /// Tasks per slot.
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl StabilityEstimate {
    pub fn is_stable(&self) -> bool {
        self.ci_lo <= 0.0 && 0.0 <= self.ci_hi
    }
}

fn circular_resample(src: &[f64], block: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let n = src.len();
    out.clear();
    while out.len() < n {
        let start = rng.random_range(0..n);
        for j in 0..block.min(n - out.len()) {
            out.push(src[(start + j) % n]);
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Slope of `y` on `x` with a 95% percentile interval from a circular block
/// bootstrap of the regression residuals (`blocks` blocks per series).
pub fn stability_slope(x: &[f64], y: &[f64], blocks: usize, reps: usize, seed: u64) -> StabilityEstimate {
    let Some((b, a)) = ols(x, y) else {
        return StabilityEstimate { slope: 0.0, ci_lo: 0.0, ci_hi: 0.0 };
    };
    let n = x.len();
    let resid: Vec<f64> = (0..n).map(|i| y[i] - (a + b * x[i])).collect();
    let block = n.div_ceil(blocks.max(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(n);
    let mut draws: Vec<f64> = (0..reps.max(2))
        .map(|_| {
            circular_resample(&resid, block, &mut rng, &mut buf);
            b + ols(x, &buf).map_or(0.0, |(s, _)| s)
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    StabilityEstimate { slope: b, ci_lo: percentile(&draws, 0.025), ci_hi: percentile(&draws, 0.975) }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean of a correlated series by circular block bootstrap.
pub fn block_bootstrap_se(series: &[f64], blocks: usize, reps: usize, seed: u64) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let block = n.div_ceil(blocks.max(1)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(n);
    let means: Vec<f64> = (0..reps.max(2))
        .map(|_| {
            circular_resample(series, block, &mut rng, &mut buf);
            mean(&buf)
        })
        .collect();
    let m = mean(&means);
    (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
}
