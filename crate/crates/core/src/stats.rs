//! Accumulators and error analysis for Monte Carlo output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point estimate with a one-sigma standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// z-score of `self - other` with independent errors.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.value, self.stderr, other.value, other.stderr)
    }
}

/// `(a - b) / sqrt(sa^2 + sb^2)`; zero when both sides are exact and equal.
pub fn z_score(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    let d = a - b;
    if s == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    } else {
        d / s
    }
}

/// Welford accumulator: `(count, mean, M2)` sufficient statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Running {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Running) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean for independent samples.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.stderr())
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::new();
        for x in iter {
            r.push(x);
        }
        r
    }
}

/// Default number of batches for batch-means errors.
pub const DEFAULT_BATCHES: usize = 100;

/// Batch-means analysis of a (correlated) time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub stderr: f64,
    pub n_batches: usize,
    pub batch_size: usize,
    pub batch_values: Vec<f64>,
}

/// Split `series` into `n_batches` equal contiguous batches (dropping the
/// remainder at the start) and use the batch averages as independent samples.
pub fn batch_means(series: &[f64], n_batches: usize) -> Result<BatchMeans> {
    if n_batches < 2 || series.len() < n_batches {
        return Err(Error::InsufficientSamples { needed: n_batches.max(2), have: series.len() });
    }
    let batch_size = series.len() / n_batches;
    let skip = series.len() - batch_size * n_batches;
    let batch_values: Vec<f64> = series[skip..]
        .chunks_exact(batch_size)
        .map(|c| c.iter().sum::<f64>() / batch_size as f64)
        .collect();
    let r: Running = batch_values.iter().copied().collect();
    Ok(BatchMeans { mean: r.mean, stderr: r.stderr(), n_batches, batch_size, batch_values })
}

impl BatchMeans {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.stderr)
    }
}

/// Minimum effective sample size before a Monte Carlo estimate is trusted.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

/// Why batch-means errors on `series` would be unreliable, if they would:
/// too few effective samples, or batches shorter than `4 tau_int`.
pub fn mixing_issue(series: &[f64], n_batches: usize) -> Option<String> {
    let tau = integrated_autocorr_time(series);
    if !tau.is_finite() {
        return Some(format!("series of length {} too short for autocorrelation analysis", series.len()));
    }
    let ess = series.len() as f64 / (2.0 * tau);
    let batch = series.len() / n_batches.max(1);
    if ess < MIN_EFFECTIVE_SAMPLES {
        Some(format!("effective sample size {ess:.0} < {MIN_EFFECTIVE_SAMPLES} (tau_int = {tau:.1})"))
    } else if (batch as f64) < 4.0 * tau {
        Some(format!("batch size {batch} < 4 tau_int = {:.1}", 4.0 * tau))
    } else {
        None
    }
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 6).
/// Returns `tau_int` in units of the series spacing; 0.5 for white noise.
pub fn integrated_autocorr_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += c / c0;
        if (lag as f64) >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Kolmogorov-Smirnov statistic of `samples` against a continuous CDF, and its
/// asymptotic p-value.
pub fn ks_test(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
