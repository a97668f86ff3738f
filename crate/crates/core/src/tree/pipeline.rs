use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{build_structure, PriPLTree};
use crate::error::{Error, Result};
use crate::fit::{partition_intervals, FitConfig};
use crate::oracle::{sw_decode, sw_perturb, DecodeConfig, NoisyHistogram, SwParams};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub epsilon: f64,
    /// Share of users sent to the SW phase.
    pub alpha: f64,
    pub k_max: usize,
    pub phi: usize,
    pub convergence_ratio: f64,
    pub decode: DecodeConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            epsilon: 0.8,
            alpha: 0.2,
            k_max: fit.k_max,
            phi: fit.granularity_phi,
            convergence_ratio: fit.convergence_ratio,
            decode: DecodeConfig::default(),
        }
    }
}

impl TreeConfig {
    pub fn fit_config(&self, n_total: usize) -> FitConfig {
        FitConfig {
            k_max: self.k_max,
            noise_floor: FitConfig::noise_floor_for(self.epsilon, n_total, self.alpha),
            granularity_phi: self.phi,
            convergence_ratio: self.convergence_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.fit_config(1).validate()
    }
}

/// Shuffles user indices and splits off `round(α n)` for phase 1.
pub fn split_phases(n: usize, alpha: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let n1 = ((alpha * n as f64).round() as usize).min(n);
    let phase2 = ids.split_off(n1);
    (ids, phase2)
}

/// SW reports from 1-based `values`, decoded with EM and EMS.
pub fn collect_phase1(values: &[usize], d: usize, epsilon: f64, decode: &DecodeConfig, rng: &mut Rng) -> Result<NoisyHistogram> {
    let params = SwParams::new(epsilon, d)?;
    let reports = values
        .iter()
        .map(|&v| {
            if v < 1 {
                return Err(Error::InputDomain("bucket 0 below domain start".into()));
            }
            sw_perturb(v - 1, &params, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    sw_decode(&reports, &params, decode)
}

/// Runs both collection phases on 1-based bucket `values` and returns the
/// refined tree.
pub fn build_tree(values: &[usize], d: usize, cfg: &TreeConfig, rng: &mut Rng) -> Result<PriPLTree> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::EmptyInput("no users"));
    }
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| v < 1 || v > d) {
        return Err(Error::InputDomain(format!("value {v} of user {i} outside [1, {d}]")));
    }
    let (ids1, ids2) = split_phases(values.len(), cfg.alpha, rng);
    if ids1.is_empty() || ids2.is_empty() {
        return Err(Error::Population {
            structure: "1-D tree phases".into(),
            available: values.len(),
            required: 2,
        });
    }
    let v1: Vec<usize> = ids1.iter().map(|&i| values[i]).collect();
    let v2: Vec<usize> = ids2.iter().map(|&i| values[i]).collect();
    let hist = collect_phase1(&v1, d, cfg.epsilon, &cfg.decode, rng)?;
    let pl = partition_intervals(&hist.freqs_em, &hist.freqs_ems, &cfg.fit_config(values.len()))?;
    let mut tree = build_structure(&pl, cfg.alpha, cfg.epsilon)?;
    tree.n_phase1 = v1.len();
    let assignment = tree.allocate_users(v2.len(), rng)?;
    tree.estimate_node_frequencies(&assignment, &v2, rng)?;
    tree.refine()?;
    Ok(tree)
}
