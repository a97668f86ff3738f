//! Continuous piecewise-linear fitting of noisy histograms.
//!
//! Buckets are 1-based: a histogram of length `d` describes values
//! `v ∈ [1, d]`, and `hist[v - 1]` is the frequency of `v`. Breakpoints
//! `s_0 = 1 < s_1 < … < s_K = d` cut the domain into intervals
//! `I_k = [s_{k−1}, s_k)` for `k < K` and `I_K = [s_{K−1}, s_K]`.
//!
//! The fitted function is
//!
//! ```text
//! f(v) = β₀ + Σ_{j<k} β_j (s_j − s_{j−1}) + β_k (v − s_{k−1}),   v ∈ I_k
//! ```
//!
//! which is continuous at every interior breakpoint by construction.

mod partition;
mod search;
mod segment;

pub use partition::{partition_intervals, partition_intervals_traced, FitTrace};
pub use search::{accelerated_candidates, CandidateSchedule, SearchOutcome};
pub use segment::{fit_segments, SegmentFitter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing 1-based cut points covering `[1, d]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Breakpoints(Vec<usize>);

impl Breakpoints {
    pub fn new(points: Vec<usize>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidConfig(
                "breakpoints need at least a start and an end".into(),
            ));
        }
        if points[0] != 1 {
            return Err(Error::InvalidConfig(format!(
                "first breakpoint must be 1, got {}",
                points[0]
            )));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self(points))
    }

    /// The single-interval partition of `[1, d]`.
    pub fn whole(d: usize) -> Result<Self> {
        Self::new(vec![1, d])
    }

    pub fn points(&self) -> &[usize] {
        &self.0
    }

    /// Number of intervals `K`.
    pub fn segments(&self) -> usize {
        self.0.len() - 1
    }

    /// Domain size `d = s_K`.
    pub fn domain(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Inclusive bucket range of interval `k ∈ [1, K]`.
    pub fn interval(&self, k: usize) -> (usize, usize) {
        let lo = self.0[k - 1];
        let hi = if k == self.segments() {
            self.0[k]
        } else {
            self.0[k] - 1
        };
        (lo, hi)
    }

    pub fn width(&self, k: usize) -> usize {
        let (lo, hi) = self.interval(k);
        hi - lo + 1
    }

    /// Interval index `k ∈ [1, K]` containing bucket `v`.
    pub fn locate(&self, v: usize) -> Option<usize> {
        if v < 1 || v > self.domain() {
            return None;
        }
        // number of points ≤ v, capped so that v = d lands in I_K
        let idx = self.0.partition_point(|&s| s <= v);
        Some(idx.min(self.segments()))
    }

    /// Returns a copy with `s` inserted.
    pub fn with_point(&self, s: usize) -> Result<Self> {
        let mut pts = self.0.clone();
        match pts.binary_search(&s) {
            Ok(_) => Err(Error::InvalidConfig(format!("breakpoint {s} already present"))),
            Err(pos) => {
                pts.insert(pos, s);
                Self::new(pts)
            }
        }
    }
}

impl TryFrom<Vec<usize>> for Breakpoints {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Breakpoints> for Vec<usize> {
    fn from(b: Breakpoints) -> Self {
        b.0
    }
}

/// A fitted continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLFunction {
    pub breakpoints: Breakpoints,
    /// `beta[0]` is the intercept at `s_0`, `beta[k]` the slope on `I_k`.
    pub beta: Vec<f64>,
    /// Histogram mass over each interval.
    pub interval_freqs: Vec<f64>,
    #[serde(skip)]
    pub rss_per_interval: Vec<f64>,
}

impl PLFunction {
    pub fn segments(&self) -> usize {
        self.breakpoints.segments()
    }

    pub fn total_rss(&self) -> f64 {
        self.rss_per_interval.iter().sum()
    }

    /// Value of the function at each breakpoint `s_0 … s_K`.
    pub fn knot_values(&self) -> Vec<f64> {
        let s = self.breakpoints.points();
        let mut out = Vec::with_capacity(s.len());
        let mut acc = self.beta[0];
        out.push(acc);
        for k in 1..s.len() {
            acc += self.beta[k] * (s[k] - s[k - 1]) as f64;
            out.push(acc);
        }
        out
    }

    /// Evaluates `f(v)` with the row of the interval containing `v`.
    pub fn eval(&self, v: usize) -> Result<f64> {
        let k = self.breakpoints.locate(v).ok_or_else(|| {
            Error::InputDomain(format!(
                "bucket {v} outside [1, {}]",
                self.breakpoints.domain()
            ))
        })?;
        Ok(self.eval_in(k, v))
    }

    /// Evaluates row `k` of the definition at `v`, whether or not `v ∈ I_k`.
    pub fn eval_in(&self, k: usize, v: usize) -> f64 {
        let s = self.breakpoints.points();
        let mut acc = self.beta[0];
        for j in 1..k {
            acc += self.beta[j] * (s[j] - s[j - 1]) as f64;
        }
        acc + self.beta[k] * (v as f64 - s[k - 1] as f64)
    }

    /// `f(v)` for every bucket.
    pub fn histogram(&self) -> Vec<f64> {
        let knots = self.knot_values();
        let s = self.breakpoints.points();
        let mut out = Vec::with_capacity(self.breakpoints.domain());
        for k in 1..=self.segments() {
            let (lo, hi) = self.breakpoints.interval(k);
            for v in lo..=hi {
                out.push(knots[k - 1] + self.beta[k] * (v - s[k - 1]) as f64);
            }
        }
        out
    }
}

/// Parameters of the greedy breakpoint search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k_max: usize,
    /// Intervals whose smoothed mass is at or below this are never split.
    pub noise_floor: f64,
    pub granularity_phi: usize,
    /// A pass stops once `RSS_new / RSS_old` reaches this ratio.
    pub convergence_ratio: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_max: 32,
            noise_floor: 0.0,
            granularity_phi: 127,
            convergence_ratio: 0.99,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 2 {
            return Err(Error::InvalidConfig(format!(
                "k_max must be at least 2, got {}",
                self.k_max
            )));
        }
        if self.granularity_phi < 2 {
            return Err(Error::InvalidConfig(format!(
                "granularity factor must be at least 2, got {}",
                self.granularity_phi
            )));
        }
        if !(self.convergence_ratio > 0.0 && self.convergence_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "convergence ratio must lie in (0, 1), got {}",
                self.convergence_ratio
            )));
        }
        if !(self.noise_floor >= 0.0) {
            return Err(Error::InvalidConfig("noise floor must be non-negative".into()));
        }
        Ok(())
    }

    /// The split threshold `σ·√(1 − α)`, with `σ²` the OUE variance over
    /// `n_total` users.
    pub fn noise_floor_for(epsilon: f64, n_total: usize, alpha: f64) -> f64 {
        crate::oracle::oue_variance(epsilon, n_total as f64).sqrt() * (1.0 - alpha).sqrt()
    }
}
