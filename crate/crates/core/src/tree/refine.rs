use super::PriPLTree;
use crate::error::{Error, Result};
use crate::oracle::oue_variance;

/// Least-squares projection of child estimates onto
/// `{x ≥ 0, Σx = total}`. Returns the projected values and which children
/// stayed positive.
pub fn project_children(dot: &[f64], total: f64) -> (Vec<f64>, Vec<bool>) {
    let n = dot.len();
    let mut plus = vec![true; n];
    loop {
        let members = plus.iter().filter(|&&p| p).count();
        if members == 0 {
            // only reachable through rounding
            return (vec![total / n as f64; n], vec![true; n]);
        }
        let held: f64 = dot.iter().zip(&plus).filter(|(_, &p)| p).map(|(v, _)| v).sum();
        let shift = (total - held) / members as f64;
        let mut changed = false;
        for i in 0..n {
            if plus[i] && dot[i] + shift < 0.0 {
                plus[i] = false;
                changed = true;
            }
        }
        if !changed {
            let out = (0..n)
                .map(|i| if plus[i] { (dot[i] + shift).max(0.0) } else { 0.0 })
                .collect();
            return (out, plus);
        }
    }
}

/// Inverse-variance combination of two estimates. Returns the combined
/// value, its variance and the weight placed on `a`.
pub(crate) fn combine(a: f64, var_a: f64, b: f64, var_b: f64) -> (f64, f64, f64) {
    if var_a.is_infinite() {
        return (b, var_b, 0.0);
    }
    if var_b.is_infinite() {
        return (a, var_a, 1.0);
    }
    let total = var_a + var_b;
    if total == 0.0 {
        return ((a + b) / 2.0, 0.0, 0.5);
    }
    let w = var_b / total;
    (w * a + (1.0 - w) * b, var_a * var_b / total, w)
}

/// The SW error proxy `(f̂ − f̄)²`, less the OUE variance when that is smaller.
pub(crate) fn sw_variance_proxy(sw: f64, oue: f64, var_oue: f64) -> f64 {
    let e = (sw - oue) * (sw - oue);
    if e > var_oue {
        e - var_oue
    } else {
        e
    }
}

impl PriPLTree {
    /// Weighted averaging from the leaves up, then non-negative consistent
    /// frequencies from the root down, then slope clamping.
    pub fn refine(&mut self) -> Result<()> {
        if self.n_phase2 == 0 {
            return Err(Error::EmptyInput("refinement needs phase-2 estimates"));
        }
        let fallback = oue_variance(self.epsilon, self.n_phase1 as f64);
        for k in self.postorder() {
            if k == 0 {
                continue;
            }
            let node = &self.nodes[k];
            let oue = node.freq_oue;
            let var_oue = if oue.is_some() { node.var_oue } else { f64::INFINITY };
            if node.is_leaf() {
                let sw = node.freq_sw.ok_or_else(|| {
                    Error::InvalidConfig(format!("leaf {k} has no fitted mass"))
                })?;
                let var_sw = match oue {
                    Some(o) => sw_variance_proxy(sw, o, var_oue),
                    None => fallback,
                };
                let (f, v, w) = combine(oue.unwrap_or(0.0), var_oue, sw, var_sw);
                let node = &mut self.nodes[k];
                node.var_sw = Some(var_sw);
                node.freq_avg = f;
                node.var_avg = v;
                node.theta = w;
            } else {
                let sum: f64 = node.children.iter().map(|&c| self.nodes[c].freq_avg).sum();
                let var_sum: f64 = node.children.iter().map(|&c| self.nodes[c].var_avg).sum();
                let (f, v, w) = combine(oue.unwrap_or(0.0), var_oue, sum, var_sum);
                let node = &mut self.nodes[k];
                node.freq_avg = f;
                node.var_avg = v;
                node.theta = w;
            }
        }
        self.nodes[0].freq_avg = 1.0;
        self.nodes[0].freq_final = 1.0;
        self.nodes[0].var_avg = 0.0;
        self.nodes[0].in_d_plus = true;
        for k in self.level_order() {
            let kids = self.nodes[k].children.clone();
            if kids.is_empty() {
                continue;
            }
            let dot: Vec<f64> = kids.iter().map(|&c| self.nodes[c].freq_avg).collect();
            let (vals, plus) = project_children(&dot, self.nodes[k].freq_final);
            for (i, &c) in kids.iter().enumerate() {
                self.nodes[c].freq_final = vals[i];
                self.nodes[c].in_d_plus = plus[i];
            }
        }
        self.clamp_slopes();
        Ok(())
    }

    /// Clamps each leaf slope so both interval endpoints stay non-negative.
    pub fn clamp_slopes(&mut self) {
        for k in self.leaves() {
            let node = &mut self.nodes[k];
            let w = node.width();
            let beta = node.slope_fit.unwrap_or(0.0);
            node.slope = Some(if w <= 1 {
                0.0
            } else {
                let c = 2.0 * node.freq_final.max(0.0) / (w as f64 * (w - 1) as f64);
                beta.clamp(-c, c)
            });
        }
    }

    /// Recomputes inner frequencies as sums of their children and re-clamps
    /// leaf slopes. Used after leaf frequencies change externally.
    pub fn refresh_from_leaves(&mut self) {
        for k in self.postorder() {
            if !self.nodes[k].is_leaf() {
                let s: f64 = self.nodes[k].children.iter().map(|&c| self.nodes[c].freq_final).sum();
                self.nodes[k].freq_final = s;
            }
        }
        self.clamp_slopes();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_keeps_positive_values() {
        let (v, p) = project_children(&[0.3, 0.5], 1.0);
        assert!((v[0] - 0.4).abs() < 1e-15 && (v[1] - 0.6).abs() < 1e-15);
        assert_eq!(p, vec![true, true]);
    }

    #[test]
    fn projection_zeroes_negative_children() {
        let (v, p) = project_children(&[-0.2, 0.5, 0.6], 1.0);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.45).abs() < 1e-15 && (v[2] - 0.55).abs() < 1e-15);
        assert_eq!(p, vec![false, true, true]);
    }

    #[test]
    fn projection_iterates() {
        // first pass moves only the first child out, which pushes the second negative
        let (v, _) = project_children(&[-1.0, 0.05, 1.0], 0.5);
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((v.iter().sum::<f64>() - 0.5).abs() < 1e-12);
        assert_eq!(v, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn combine_is_inverse_variance() {
        let (f, v, w) = combine(1.0, 1.0, 0.0, 3.0);
        assert!((f - 0.75).abs() < 1e-15);
        assert!((v - 0.75).abs() < 1e-15);
        assert!((w - 0.75).abs() < 1e-15);
        assert_eq!(combine(5.0, f64::INFINITY, 2.0, 1.0), (2.0, 1.0, 0.0));
    }

    #[test]
    fn proxy_subtracts_when_larger() {
        assert!((sw_variance_proxy(0.3, 0.1, 0.01) - 0.03).abs() < 1e-12);
        assert!((sw_variance_proxy(0.3, 0.25, 0.01) - 0.0025).abs() < 1e-12);
    }
}
