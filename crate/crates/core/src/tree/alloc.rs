use rand::seq::SliceRandom;
use rand::Rng as _;

use super::PriPLTree;
use crate::error::{Error, Result};
use crate::oracle::{oue_variance, OueParams};
use crate::rng::Rng;

/// Phase-2 users assigned to each node, by phase-2 user index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserAssignment {
    pub per_node: Vec<Vec<u32>>,
    pub n_users: usize,
}

impl UserAssignment {
    /// Per-user node lists in CSR form: nodes of user `u` are
    /// `nodes[offsets[u]..offsets[u + 1]]`, ascending by id.
    pub fn per_user(&self) -> (Vec<usize>, Vec<u32>) {
        let mut offsets = vec![0usize; self.n_users + 1];
        for users in &self.per_node {
            for &u in users {
                offsets[u as usize + 1] += 1;
            }
        }
        for i in 0..self.n_users {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut nodes = vec![0u32; offsets[self.n_users]];
        for (k, users) in self.per_node.iter().enumerate() {
            for &u in users {
                nodes[fill[u as usize]] = k as u32;
                fill[u as usize] += 1;
            }
        }
        (offsets, nodes)
    }
}

impl PriPLTree {
    /// Splits `n` users over the nodes: walking down, each node draws
    /// `⌈|U| / h⌉` users from the pool it inherits, and its children share
    /// what is left.
    pub fn allocate_users(&self, n: usize, rng: &mut Rng) -> Result<UserAssignment> {
        if n > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("{n} users exceed u32 ids")));
        }
        let mut per_node = vec![Vec::new(); self.nodes.len()];
        let pool: Vec<u32> = (0..n as u32).collect();
        for &c in &self.nodes[0].children {
            self.assign(c, &pool, &mut per_node, rng);
        }
        for (k, users) in per_node.iter().enumerate().skip(1) {
            if users.is_empty() {
                log::warn!("node {k} {:?} received no users", self.nodes[k].interval);
            }
        }
        Ok(UserAssignment { per_node, n_users: n })
    }

    fn assign(&self, k: usize, pool: &[u32], out: &mut [Vec<u32>], rng: &mut Rng) {
        let h = self.nodes[k].subtree_height;
        let take = pool.len().div_ceil(h);
        let mut local = pool.to_vec();
        let (chosen, rest) = local.partial_shuffle(rng, take);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        out[k] = chosen;
        let rest = rest.to_vec();
        for &c in &self.nodes[k].children {
            self.assign(c, &rest, out, rng);
        }
    }

    /// Runs OUE over each user's node set and stores the calibrated
    /// node frequencies. `values` are 1-based buckets of the phase-2 users.
    pub fn estimate_node_frequencies(
        &mut self,
        assignment: &UserAssignment,
        values: &[usize],
        rng: &mut Rng,
    ) -> Result<()> {
        if values.len() != assignment.n_users {
            return Err(Error::Ragged {
                expected: assignment.n_users,
                found: values.len(),
                index: 0,
            });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| v < 1 || v > self.d) {
            return Err(Error::InputDomain(format!(
                "value {v} of user {i} outside [1, {}]",
                self.d
            )));
        }
        let oue = OueParams::new(self.epsilon, 1)?;
        let (offsets, nodes) = assignment.per_user();
        let mut ones = vec![0u64; self.nodes.len()];
        for (u, &v) in values.iter().enumerate() {
            for &k in &nodes[offsets[u]..offsets[u + 1]] {
                let (lo, hi) = self.nodes[k as usize].interval;
                let prob = if lo <= v && v <= hi { oue.p } else { oue.q };
                if rng.random::<f64>() < prob {
                    ones[k as usize] += 1;
                }
            }
        }
        self.n_phase2 = values.len();
        for k in 1..self.nodes.len() {
            let n_k = assignment.per_node[k].len();
            let node = &mut self.nodes[k];
            node.n_users = n_k;
            node.var_oue = oue_variance(self.epsilon, n_k as f64);
            node.freq_oue = if n_k == 0 {
                None
            } else {
                Some(oue.calibrate(&ones[k..=k], n_k as u64)?[0])
            };
        }
        Ok(())
    }
}
