//! Local differential privacy frequency oracles.
//!
//! Two mechanisms are provided. [`oue`] perturbs one-hot bit vectors and is
//! used wherever a frequency over a small set of cells (tree nodes, grid
//! cells) is estimated. [`sw`] perturbs a bucketized numerical value inside a
//! square window and is decoded by expectation maximization into a full
//! distribution over the bucket domain.
//!
//! Both oracles index cells and buckets from zero. Estimates are returned
//! unclipped; clipping happens in later refinement stages.

pub mod oue;
pub mod sw;

pub use oue::{oue_aggregate, oue_perturb, OueParams, OueVariance};
pub use sw::{sw_decode, sw_decode_counts, sw_perturb, DecodeConfig, NoisyHistogram, SwParams};

/// OUE estimation variance `4e^ε / (n (e^ε − 1)²)`, evaluated without overflow
/// for large budgets. Returns infinity for `n == 0`.
pub fn oue_variance(epsilon: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return f64::INFINITY;
    }
    let t = (-epsilon).exp();
    4.0 * t / (n * (1.0 - t).powi(2))
}
