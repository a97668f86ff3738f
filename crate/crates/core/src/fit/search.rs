//! Multi-granular candidate search.
//!
//! The first round scans the whole space with step `⌈|Θ|/φ⌉`; every later
//! round scans `±(previous step)` around the incumbent with step
//! `⌈|Θ|/φ^r⌉`, finishing with a round of step 1.

/// Step sequence and bounds for one search space `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSchedule {
    pub lo: usize,
    pub hi: usize,
    steps: Vec<usize>,
}

/// Outcome of [`CandidateSchedule::search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub best: usize,
    pub cost: f64,
    /// Number of candidate evaluations performed.
    pub evaluated: usize,
}

/// Builds the schedule for `[lo, hi]` with granularity `phi`.
pub fn accelerated_candidates(lo: usize, hi: usize, phi: usize) -> CandidateSchedule {
    assert!(lo <= hi, "empty search space");
    let size = hi - lo + 1;
    let phi = phi.max(2);
    let mut steps = Vec::new();
    let mut denom: Option<usize> = Some(phi);
    loop {
        let step = match denom {
            Some(dn) => size.div_ceil(dn),
            None => 1,
        };
        steps.push(step);
        if step <= 1 {
            break;
        }
        denom = denom.and_then(|dn| dn.checked_mul(phi));
    }
    CandidateSchedule { lo, hi, steps }
}

impl CandidateSchedule {
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Candidates of round `r`. Round 0 ignores `incumbent`; later rounds
    /// are centred on it.
    pub fn round(&self, r: usize, incumbent: usize) -> Vec<usize> {
        let step = self.steps[r];
        if r == 0 {
            return (self.lo..=self.hi).step_by(step).collect();
        }
        let reach = self.steps[r - 1];
        let start = incumbent.saturating_sub(reach).max(self.lo);
        let end = (incumbent + reach).min(self.hi);
        // align to the lattice through the incumbent
        let first = incumbent - ((incumbent - start) / step) * step;
        (first..=end).step_by(step).collect()
    }

    /// Minimises `cost` over the schedule. Ties go to the smaller candidate.
    pub fn search<F: FnMut(usize) -> f64>(&self, mut cost: F) -> SearchOutcome {
        let mut best = self.lo;
        let mut best_cost = f64::INFINITY;
        let mut evaluated = 0;
        for r in 0..self.steps.len() {
            for s in self.round(r, best) {
                let c = cost(s);
                evaluated += 1;
                if c < best_cost || (c == best_cost && s < best) {
                    best = s;
                    best_cost = c;
                }
            }
        }
        SearchOutcome {
            best,
            cost: best_cost,
            evaluated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sequence_1024_by_16() {
        let s = accelerated_candidates(1, 1024, 16);
        assert_eq!(s.steps(), &[64, 4, 1]);
    }

    #[test]
    fn large_phi_is_exhaustive() {
        let s = accelerated_candidates(5, 40, 127);
        assert_eq!(s.steps(), &[1]);
        assert_eq!(s.round(0, 5), (5..=40).collect::<Vec<_>>());
    }

    #[test]
    fn single_point_space() {
        let s = accelerated_candidates(7, 7, 10);
        let out = s.search(|x| x as f64);
        assert_eq!(out.best, 7);
        assert_eq!(out.evaluated, 1);
    }

    #[test]
    fn candidate_count_bound() {
        let phi = 10;
        let s = accelerated_candidates(1, 100, phi);
        let out = s.search(|x| (x as f64 - 37.0).abs());
        assert_eq!(out.best, 37);
        // one full round plus at most 2φ+1 per refining round, over ⌈log_φ 100⌉ rounds
        let rounds = 2;
        assert!(out.evaluated <= phi + (rounds - 1) * (2 * phi + 1));
    }

    #[test]
    fn later_rounds_include_incumbent() {
        let s = accelerated_candidates(3, 500, 8);
        for inc in [3, 4, 100, 499, 500] {
            let c = s.round(1, inc);
            assert!(c.contains(&inc));
            assert!(c.iter().all(|&x| (3..=500).contains(&x)));
        }
    }

    #[test]
    fn ties_pick_smallest() {
        let s = accelerated_candidates(1, 50, 100);
        assert_eq!(s.search(|_| 1.0).best, 1);
    }
}
