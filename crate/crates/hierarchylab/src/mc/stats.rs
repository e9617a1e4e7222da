//! Batch-means statistics.
//!
//! Draws are split into equal contiguous batches; each batch accumulates the
//! sums of a fixed list of per-draw observables in draw order. An estimate is
//! a smooth function of the observable means: its value uses the pooled
//! means and its standard error is the standard deviation of the same
//! function evaluated on each batch, divided by √B.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::map_indices;

/// Number of batches used for error bars.
pub const N_BATCHES: usize = 20;

/// Monte Carlo value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub n_batches: usize,
}

impl MCEstimate {
    /// (value − pred)/std_error.
    pub fn z_score(&self, pred: f64) -> f64 {
        (self.value - pred) / self.std_error
    }
}

/// Per-batch observable sums.
#[derive(Clone, Debug)]
pub struct BatchSums {
    pub sums: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl BatchSums {
    /// Runs `draw(i, out)` for every draw index, where `out` receives the
    /// draw's observables (zeroed beforehand), and sums them per batch.
    /// Batches run in parallel; sums are formed in draw order within each
    /// batch, so the result is independent of the worker count.
    pub fn collect<F>(n_samples: usize, n_obs: usize, draw: F) -> Result<Self>
    where
        F: Fn(u64, &mut [f64]) -> Result<()> + Sync + Send,
    {
        let b = N_BATCHES;
        let per = n_samples / b;
        let extra = n_samples % b;
        let results = map_indices(0..b as u64, |batch| -> Result<(Vec<f64>, usize)> {
            let batch = batch as usize;
            let start = batch * per + batch.min(extra);
            let len = per + usize::from(batch < extra);
            let mut sums = vec![0.0; n_obs];
            let mut buf = vec![0.0; n_obs];
            for i in start..start + len {
                buf.iter_mut().for_each(|v| *v = 0.0);
                draw(i as u64, &mut buf)?;
                for (s, v) in sums.iter_mut().zip(&buf) {
                    *s += v;
                }
            }
            Ok((sums, len))
        });
        let mut sums = Vec::with_capacity(b);
        let mut counts = Vec::with_capacity(b);
        for r in results {
            let (s, c) = r?;
            sums.push(s);
            counts.push(c);
        }
        Ok(Self { sums, counts })
    }

    /// Total number of draws.
    pub fn n_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Pooled means of all observables.
    pub fn pooled_means(&self) -> Vec<f64> {
        let n = self.n_samples() as f64;
        let k = self.sums[0].len();
        (0..k)
            .map(|j| self.sums.iter().map(|s| s[j]).sum::<f64>() / n)
            .collect()
    }

    /// Estimate of f(means) with a batch-means error bar.
    pub fn estimate<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<MCEstimate> {
        let value = f(&self.pooled_means());
        let per_batch: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| {
                let means: Vec<f64> = s.iter().map(|v| v / c as f64).collect();
                f(&means)
            })
            .collect();
        let b = per_batch.len() as f64;
        let mean = per_batch.iter().sum::<f64>() / b;
        let var = per_batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let std_error = (var / b).sqrt();
        if !value.is_finite() || !std_error.is_finite() {
            return Err(Error::NonFinite("Monte Carlo estimate".into()));
        }
        Ok(MCEstimate {
            value,
            std_error,
            n_samples: self.n_samples(),
            n_batches: self.counts.len(),
        })
    }
}

/// Minimum number of draws accepted by the estimators.
pub const MIN_SAMPLES: usize = 10_000;

pub(crate) fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: n,
            min: MIN_SAMPLES,
        });
    }
    Ok(())
}

/// Cumulants κ₁…κ₈ from raw moments m₁…m₈ (index k holds m_k; m₀ unused).
pub fn cumulants_from_moments(m: &[f64; 9]) -> [f64; 9] {
    // Recursive relation κ_n = m_n − Σ_{k=1}^{n−1} C(n−1, k−1) κ_k m_{n−k}.
    let mut k = [0.0; 9];
    for n in 1..=8 {
        let mut acc = m[n];
        for j in 1..n {
            acc -= binom(n - 1, j - 1) * k[j] * m[n - j];
        }
        k[n] = acc;
    }
    k
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Outcome of comparing a prediction with a Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pred: f64,
    pub value: f64,
    pub std_error: f64,
    pub z: f64,
    pub z_max: f64,
    pub pass: bool,
}

/// Passes iff |pred − est.value| ≤ z_max·est.std_error.
pub fn verify(pred: f64, est: &MCEstimate, z_max: f64) -> Result<VerifyReport> {
    if !(est.std_error > 0.0) {
        return Err(Error::OutOfRange("std_error must be > 0".into()));
    }
    let z = (est.value - pred) / est.std_error;
    Ok(VerifyReport {
        pred,
        value: est.value,
        std_error: est.std_error,
        z,
        z_max,
        pass: z.abs() <= z_max,
    })
}
