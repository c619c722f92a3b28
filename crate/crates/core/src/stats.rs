//! Small statistics helpers for Monte Carlo summaries.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    /// `|mean - target| / se`.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}

/// Exact (Clopper-Pearson) one-sided confidence bounds for a binomial proportion.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .expect("positive shape")
            .inverse_cdf(alpha)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha)
    };
    (lo, hi)
}

/// Proportion estimate with binomial standard error.
pub fn proportion(k: u64, n: u64) -> Estimate {
    let p = k as f64 / n as f64;
    Estimate {
        mean: p,
        se: (p * (1.0 - p) / n as f64).sqrt(),
        n: n as usize,
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median with a bootstrap standard error.
pub fn bootstrap_median(xs: &[f64], resamples: usize, seed: u64) -> Estimate {
    let mut rng = stream_rng(seed, 0);
    let n = xs.len();
    let meds: Vec<f64> = (0..resamples)
        .map(|_| {
            let s: Vec<f64> = (0..n).map(|_| xs[rng.gen_range(0..n)]).collect();
            median(&s)
        })
        .collect();
    let m = meds.iter().sum::<f64>() / resamples as f64;
    let var = meds.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (resamples.max(2) - 1) as f64;
    Estimate {
        mean: median(xs),
        se: var.sqrt(),
        n,
    }
}
