//! Optimal Unary Encoding.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Parameters of an OUE instance over `cells` positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OueParams {
    pub epsilon: f64,
    pub cells: usize,
    /// Probability that a true 1 survives.
    pub p: f64,
    /// Probability that a true 0 flips to 1.
    pub q: f64,
}

impl OueParams {
    pub fn new(epsilon: f64, cells: usize) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "privacy budget must be positive, got {epsilon}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidConfig("OUE needs at least one cell".into()));
        }
        let t = (-epsilon).exp();
        Ok(Self {
            epsilon,
            cells,
            p: 0.5,
            // 1 / (e^ε + 1) written in terms of e^-ε
            q: t / (1.0 + t),
        })
    }

    /// Perturbs into a caller-provided buffer of length `cells`.
    pub fn perturb_into(&self, true_index: Option<usize>, out: &mut [bool], rng: &mut Rng) {
        debug_assert_eq!(out.len(), self.cells);
        for (i, bit) in out.iter_mut().enumerate() {
            let prob = if Some(i) == true_index { self.p } else { self.q };
            *bit = rng.random::<f64>() < prob;
        }
    }

    /// Calibrates per-cell counts of ones from `n` reports into unbiased
    /// frequency estimates `(n'_v − n q) / (n (p − q))`.
    pub fn calibrate(&self, ones: &[u64], n: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::EmptyInput("OUE calibration needs at least one report"));
        }
        let n = n as f64;
        let scale = n * (self.p - self.q);
        Ok(ones
            .iter()
            .map(|&c| (c as f64 - n * self.q) / scale)
            .collect())
    }

    /// Draws the aggregate count of ones per cell directly from the true
    /// per-cell counts.
    ///
    /// Bits of distinct users and distinct positions are independent, so the
    /// count at cell `v` is `Bin(t_v, p) + Bin(n − t_v, q)`; this matches the
    /// distribution of summing [`oue_perturb`] outputs over `n` users.
    /// `n` may exceed `Σ t_v` for users whose value falls in no cell.
    pub fn simulate_counts(&self, true_counts: &[u64], n: u64, rng: &mut Rng) -> Vec<u64> {
        true_counts
            .iter()
            .map(|&t| {
                let hits = sample_binomial(t, self.p, rng);
                let flips = sample_binomial(n - t, self.q, rng);
                hits + flips
            })
            .collect()
    }
}

fn sample_binomial(n: u64, p: f64, rng: &mut Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability validated above")
        .sample(rng)
}

/// Perturbs one user's value. `None` encodes a value outside all cells: the
/// true vector is all zeros and every bit is still randomized.
pub fn oue_perturb(true_index: Option<usize>, params: &OueParams, rng: &mut Rng) -> Result<Vec<bool>> {
    if let Some(i) = true_index {
        if i >= params.cells {
            return Err(Error::InputDomain(format!(
                "OUE index {i} outside {} cells",
                params.cells
            )));
        }
    }
    let mut out = vec![false; params.cells];
    params.perturb_into(true_index, &mut out, rng);
    Ok(out)
}

/// Aggregates `n` perturbed bit vectors into unbiased frequency estimates.
pub fn oue_aggregate<R: AsRef<[bool]>>(reports: &[R], params: &OueParams, n: usize) -> Result<Vec<f64>> {
    if n == 0 || reports.is_empty() {
        return Err(Error::EmptyInput("OUE aggregation needs at least one report"));
    }
    let width = params.cells;
    let mut ones = vec![0u64; width];
    for (index, report) in reports.iter().enumerate() {
        let bits = report.as_ref();
        if bits.len() != width {
            return Err(Error::Ragged {
                expected: width,
                found: bits.len(),
                index,
            });
        }
        for (count, &bit) in ones.iter_mut().zip(bits) {
            *count += bit as u64;
        }
    }
    params.calibrate(&ones, n as u64)
}

/// Theoretical OUE estimation variance for a population of `n` users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OueVariance {
    pub sigma_sq: f64,
}

impl OueVariance {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("OUE variance needs a positive population"));
        }
        Ok(Self {
            sigma_sq: super::oue_variance(epsilon, n as f64),
        })
    }
}
