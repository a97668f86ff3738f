use super::PriPLTree;
use crate::error::{Error, Result};

/// Mass of the linear segment starting at bucket `start` with `width`
/// buckets, total `freq` and `slope`, over the sub-range `[l, r]`.
pub fn segment_range_sum(start: usize, width: usize, freq: f64, slope: f64, l: usize, r: usize) -> f64 {
    let n = (r - l + 1) as f64;
    let mid = (l + r + 1) as f64 - width as f64;
    n * (slope * (mid / 2.0 - start as f64) + freq / width as f64)
}

impl PriPLTree {
    /// Estimated frequency of buckets `[l, r]`.
    pub fn answer_1d(&self, l: usize, r: usize) -> Result<f64> {
        if l < 1 || l > r || r > self.d {
            return Err(Error::InputDomain(format!(
                "range [{l}, {r}] invalid for domain [1, {}]",
                self.d
            )));
        }
        Ok(self.sum_range(0, l, r))
    }

    fn sum_range(&self, k: usize, l: usize, r: usize) -> f64 {
        let node = &self.nodes[k];
        let (lo, hi) = node.interval;
        if hi < l || lo > r {
            return 0.0;
        }
        if l <= lo && hi <= r {
            return node.freq_final;
        }
        if node.is_leaf() {
            let slope = node.slope.unwrap_or(0.0);
            return segment_range_sum(lo, node.width(), node.freq_final, slope, l.max(lo), r.min(hi));
        }
        node.children.iter().map(|&c| self.sum_range(c, l, r)).sum()
    }

    /// Per-bucket estimate implied by the leaves.
    pub fn histogram(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d);
        for k in self.leaves() {
            let node = &self.nodes[k];
            let (lo, hi) = node.interval;
            let slope = node.slope.unwrap_or(0.0);
            for v in lo..=hi {
                out.push(segment_range_sum(lo, node.width(), node.freq_final, slope, v, v));
            }
        }
        out
    }
}
