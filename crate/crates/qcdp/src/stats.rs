//! Summary statistics for Monte Carlo samples: moments with jackknife
//! standard errors, the Kolmogorov-Smirnov distance to a centred normal law
//! and the Lyapunov sum of block fourth moments.

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::numerics::csum;

/// Smallest sample accepted by [`summarize`].
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("target variance must be positive, got {0}")]
    Variance(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Adjusted Fisher-Pearson skewness G₁.
    pub skewness: f64,
    /// Unbiased excess kurtosis G₂.
    pub excess_kurtosis: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    /// Set when all samples coincide; skewness and kurtosis are then NaN.
    pub degenerate: bool,
}

/// (mean, variance, G₁, G₂) from central power sums of n points.
fn moments(n: f64, mean: f64, s2: f64, s3: f64, s4: f64) -> (f64, f64, f64, f64) {
    let (m2, m3, m4) = (s2 / n, s3 / n, s4 / n);
    let var = s2 / (n - 1.0);
    if m2 <= 0.0 {
        return (mean, 0.0, f64::NAN, f64::NAN);
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let skew = g1 * (n * (n - 1.0)).sqrt() / (n - 2.0);
    let kurt = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    (mean, var, skew, kurt)
}

/// Moment estimators with delete-one jackknife standard errors.
pub fn summarize(samples: &[f64]) -> Result<SampleSummary, StatsError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(StatsError::TooFewSamples { n, min: MIN_SAMPLES });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = csum(samples.iter().copied()) / nf;
    // raw power sums of the centred data, from which each leave-one-out
    // sample's central sums follow in O(1)
    let d: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let p1 = csum(d.iter().copied());
    let p2 = csum(d.iter().map(|x| x * x));
    let p3 = csum(d.iter().map(|x| x.powi(3)));
    let p4 = csum(d.iter().map(|x| x.powi(4)));
    let central = |k: f64, q1: f64, q2: f64, q3: f64, q4: f64| {
        let c = q1 / k;
        let s2 = q2 - k * c * c;
        let s3 = q3 - 3.0 * c * q2 + 3.0 * c * c * q1 - k * c.powi(3);
        let s4 = q4 - 4.0 * c * q3 + 6.0 * c * c * q2 - 4.0 * c.powi(3) * q1 + k * c.powi(4);
        (c, s2.max(0.0), s3, s4.max(0.0))
    };
    let (c, s2, s3, s4) = central(nf, p1, p2, p3, p4);
    let (_, variance, skewness, excess_kurtosis) = moments(nf, mean + c, s2, s3, s4);
    let degenerate = variance == 0.0;

    let k = nf - 1.0;
    let loo: Vec<[f64; 4]> = d
        .iter()
        .map(|&x| {
            let (c, s2, s3, s4) = central(k, p1 - x, p2 - x * x, p3 - x.powi(3), p4 - x.powi(4));
            let (m, v, g1, g2) = moments(k, mean + c, s2, s3, s4);
            [m, v, g1, g2]
        })
        .collect();
    let jackknife = |j: usize| {
        if degenerate {
            return if j < 2 { 0.0 } else { f64::NAN };
        }
        let bar = csum(loo.iter().map(|r| r[j])) / nf;
        ((nf - 1.0) / nf * csum(loo.iter().map(|r| (r[j] - bar).powi(2)))).sqrt()
    };
    Ok(SampleSummary {
        n,
        mean,
        variance,
        skewness,
        excess_kurtosis,
        mean_se: jackknife(0),
        variance_se: jackknife(1),
        skewness_se: jackknife(2),
        kurtosis_se: jackknife(3),
        degenerate,
    })
}

/// CDF of 𝒩(0, v).
pub fn normal_cdf(x: f64, v: f64) -> f64 {
    0.5 * erfc(-x / (2.0 * v).sqrt())
}

/// sup_x |F_n(x) − Φ_v(x)| for the empirical CDF F_n of `samples`.
pub fn ks_distance(samples: &[f64], v: f64) -> Result<f64, StatsError> {
    if !(v > 0.0) {
        return Err(StatsError::Variance(v));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal_cdf(x, v);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovSum {
    pub value: f64,
    pub stderr: f64,
}

/// Σ_i of the empirical E|X^{(i)}|⁴ with the standard error pooled over
/// independent blocks.
pub fn lyapunov_sum<S: AsRef<[f64]>>(blocks: &[S]) -> LyapunovSum {
    let mut value = Vec::with_capacity(blocks.len());
    let mut var = Vec::with_capacity(blocks.len());
    for b in blocks {
        let b = b.as_ref();
        if b.is_empty() {
            continue;
        }
        let n = b.len() as f64;
        let m = csum(b.iter().map(|x| x.powi(4))) / n;
        value.push(m);
        if b.len() > 1 {
            var.push(csum(b.iter().map(|x| (x.powi(4) - m).powi(2))) / ((n - 1.0) * n));
        }
    }
    LyapunovSum {
        value: csum(value),
        stderr: csum(var).sqrt(),
    }
}

/// Per-experiment JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub var_se: f64,
    pub skew: f64,
    pub kurt: f64,
    pub ks: f64,
    pub v_target: f64,
}

impl StatsReport {
    pub fn new(samples: &[f64], v_target: f64) -> Result<Self, StatsError> {
        let s = summarize(samples)?;
        Ok(Self {
            n: s.n,
            mean: s.mean,
            var: s.variance,
            var_se: s.variance_se,
            skew: s.skewness,
            kurt: s.excess_kurtosis,
            ks: ks_distance(samples, v_target)?,
            v_target,
        })
    }
}
