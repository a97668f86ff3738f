//! Square Wave mechanism over a bucketized domain.
//!
//! A value `v ∈ [0, d)` is reported in the shifted alphabet `[0, d + 2b)`.
//! Report `r` lies in the high-probability window of `v` iff
//! `|(r − b) − v| ≤ b`, i.e. `v ≤ r ≤ v + 2b`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwParams {
    pub epsilon: f64,
    /// Number of input buckets.
    pub d: usize,
    /// Half-window in bucket units.
    pub b: usize,
    pub p: f64,
    pub q: f64,
}

impl SwParams {
    pub fn new(epsilon: f64, d: usize) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "privacy budget must be positive, got {epsilon}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidConfig("SW needs a non-empty domain".into()));
        }
        let t = (-epsilon).exp();
        // (ε e^ε − e^ε + 1) / (2 e^ε (e^ε − 1 − ε)), divided through by e^ε
        let ratio = (epsilon - 1.0 + t) / (2.0 * (epsilon.exp_m1() - epsilon));
        let b = if ratio.is_finite() {
            (ratio * d as f64).floor().max(0.0) as usize
        } else {
            0
        };
        let denom = (2 * b + 1) as f64 + (d as f64 - 1.0) * t;
        Ok(Self {
            epsilon,
            d,
            b,
            p: 1.0 / denom,
            q: t / denom,
        })
    }

    /// Size of the report alphabet, `d + 2b`.
    pub fn outputs(&self) -> usize {
        self.d + 2 * self.b
    }

    /// Transition probability `P(report = r | value = v)`.
    pub fn transition(&self, r: usize, v: usize) -> f64 {
        if r >= v && r <= v + 2 * self.b {
            self.p
        } else {
            self.q
        }
    }
}

/// Perturbs a bucket index into a report index.
pub fn sw_perturb(value: usize, params: &SwParams, rng: &mut Rng) -> Result<usize> {
    if value >= params.d {
        return Err(Error::InputDomain(format!(
            "SW value {value} outside [0, {})",
            params.d
        )));
    }
    let window = 2 * params.b + 1;
    let u: f64 = rng.random();
    if u < window as f64 * params.p || params.d == 1 {
        Ok(value + rng.random_range(0..window))
    } else {
        let j = rng.random_range(0..params.d - 1);
        Ok(if j < value { j } else { j + window })
    }
}

/// The 3-tap smoothing kernel applied after each M-step in EMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub kernel: [f64; 3],
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            kernel: [0.25, 0.5, 0.25],
        }
    }
}

/// Distribution estimates over `d` buckets from one SW population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyHistogram {
    pub freqs_em: Vec<f64>,
    pub freqs_ems: Vec<f64>,
    pub epsilon: f64,
    pub n_users: usize,
}

/// Decodes a batch of reports into EM and EMS histograms.
pub fn sw_decode(reports: &[usize], params: &SwParams, cfg: &DecodeConfig) -> Result<NoisyHistogram> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("SW decoding needs at least one report"));
    }
    let mut counts = vec![0u64; params.outputs()];
    for &r in reports {
        if r >= counts.len() {
            return Err(Error::InputDomain(format!(
                "SW report {r} outside [0, {})",
                counts.len()
            )));
        }
        counts[r] += 1;
    }
    sw_decode_counts(&counts, params, cfg)
}

/// Decodes per-report-index counts.
pub fn sw_decode_counts(counts: &[u64], params: &SwParams, cfg: &DecodeConfig) -> Result<NoisyHistogram> {
    if counts.len() != params.outputs() {
        return Err(Error::Ragged {
            expected: params.outputs(),
            found: counts.len(),
            index: 0,
        });
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("SW decoding needs at least one report"));
    }
    let freqs_em = run_em(counts, params, cfg, None)?;
    let freqs_ems = run_em(counts, params, cfg, Some(cfg.kernel))?;
    Ok(NoisyHistogram {
        freqs_em,
        freqs_ems,
        epsilon: params.epsilon,
        n_users: n as usize,
    })
}

fn prefix(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

fn run_em(counts: &[u64], params: &SwParams, cfg: &DecodeConfig, kernel: Option<[f64; 3]>) -> Result<Vec<f64>> {
    let d = params.d;
    let outs = params.outputs();
    let span = 2 * params.b;
    let (p, q) = (params.p, params.q);
    let n: f64 = counts.iter().map(|&c| c as f64).sum();

    let mut f = vec![1.0 / d as f64; d];
    let mut y = vec![0.0; outs];
    let mut ratio = vec![0.0; outs];
    let mut prev_ll: Option<f64> = None;

    for iteration in 0..cfg.max_iters {
        // E-step: y = M f, with M = q + (p − q)·window
        let pf = prefix(&f);
        let total = pf[d];
        let mut ll = 0.0;
        for r in 0..outs {
            let lo = r.saturating_sub(span);
            let hi = r.min(d - 1);
            let in_window = if lo <= hi { pf[hi + 1] - pf[lo] } else { 0.0 };
            y[r] = q * total + (p - q) * in_window;
            if counts[r] > 0 {
                ll += counts[r] as f64 * y[r].ln();
                ratio[r] = counts[r] as f64 / y[r];
            } else {
                ratio[r] = 0.0;
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical { iteration });
        }
        if let Some(prev) = prev_ll {
            if (ll - prev).abs() < cfg.tol * prev.abs() {
                break;
            }
        }
        prev_ll = Some(ll);

        // M-step: f_v ← f_v (Mᵀ ratio)_v / n
        let pr = prefix(&ratio);
        let ratio_total = pr[outs];
        for (v, fv) in f.iter_mut().enumerate() {
            let in_window = pr[v + span + 1] - pr[v];
            *fv *= (q * ratio_total + (p - q) * in_window) / n;
        }
        if let Some(k) = kernel {
            f = smooth(&f, k);
        }
        normalize(&mut f);
    }
    normalize(&mut f);
    Ok(f)
}

/// Convolves with a 3-tap kernel, reflecting at both ends.
fn smooth(f: &[f64], k: [f64; 3]) -> Vec<f64> {
    let d = f.len();
    if d < 2 {
        return f.to_vec();
    }
    (0..d)
        .map(|i| {
            let left = if i == 0 { f[0] } else { f[i - 1] };
            let right = if i + 1 == d { f[d - 1] } else { f[i + 1] };
            k[0] * left + k[1] * f[i] + k[2] * right
        })
        .collect()
}

fn normalize(f: &mut [f64]) {
    for v in f.iter_mut() {
        if *v < 0.0 || !v.is_finite() {
            *v = 0.0;
        }
    }
    let s: f64 = f.iter().sum();
    if s > 0.0 {
        f.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / f.len() as f64;
        f.iter_mut().for_each(|v| *v = u);
    }
}
