use num_traits::Num;

use super::PriPLTree;

/// Arithmetic needed by the weight propagation; `f64` and exact rationals
/// both qualify.
pub trait LedgerScalar: Num + Clone {}
impl<T: Num + Clone> LedgerScalar for T {}

/// Tree shape plus the consistency outcome, indexed with the root at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerShape {
    pub children: Vec<Vec<usize>>,
    pub d_plus: Vec<bool>,
}

impl LedgerShape {
    fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(0, false)];
        while let Some((k, done)) = stack.pop() {
            if done {
                out.push(k);
            } else {
                stack.push((k, true));
                stack.extend(self.children[k].iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    fn level_order(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.children[out[i]].iter().copied());
            i += 1;
        }
        out
    }
}

/// `Σ_j w_j² v_j`, with `None` standing for an infinite base variance.
/// Zero weights on infinite entries contribute nothing.
pub fn weighted_variance<T: LedgerScalar>(w: &[T], base: &[Option<T>]) -> Option<T> {
    let mut acc = T::zero();
    for (wj, vj) in w.iter().zip(base) {
        if wj.is_zero() {
            continue;
        }
        acc = acc + wj.clone() * wj.clone() * vj.clone()?;
    }
    Some(acc)
}

/// Expresses every node's refined frequency as a linear combination of the
/// base estimates. Returns one weight vector per node.
pub fn propagate_weights<T: LedgerScalar>(shape: &LedgerShape, base: &[Option<T>]) -> Vec<Vec<T>> {
    let n = shape.children.len();
    let mut w: Vec<Vec<T>> = (0..n)
        .map(|k| {
            let mut v = vec![T::zero(); n];
            if k != 0 {
                v[k] = T::one();
            }
            v
        })
        .collect();
    for k in shape.postorder() {
        let kids = &shape.children[k];
        if k == 0 || kids.is_empty() {
            continue;
        }
        let mut var_kids = Some(T::zero());
        let mut sum = vec![T::zero(); n];
        for &c in kids {
            var_kids = match (var_kids, weighted_variance(&w[c], base)) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
            for j in 0..n {
                sum[j] = sum[j].clone() + w[c][j].clone();
            }
        }
        let own = weighted_variance(&w[k], base);
        let theta = match (own, var_kids) {
            (None, _) => T::zero(),
            (Some(_), None) => T::one(),
            (Some(v), Some(s)) => {
                let total = v + s.clone();
                if total.is_zero() {
                    T::one() / (T::one() + T::one())
                } else {
                    s / total
                }
            }
        };
        let rest = T::one() - theta.clone();
        for j in 0..n {
            w[k][j] = theta.clone() * w[k][j].clone() + rest.clone() * sum[j].clone();
        }
    }
    for p in shape.level_order() {
        let kids: Vec<usize> = shape.children[p].iter().copied().filter(|&c| shape.d_plus[c]).collect();
        if kids.is_empty() {
            continue;
        }
        let size = kids.iter().fold(T::zero(), |a, _| a + T::one());
        let snapshot: Vec<Vec<T>> = kids.iter().map(|&c| w[c].clone()).collect();
        for (i, &k) in kids.iter().enumerate() {
            for j in 0..n {
                let mut others = T::zero();
                for (s, snap) in snapshot.iter().enumerate() {
                    if s != i {
                        others = others + snap[j].clone();
                    }
                }
                w[k][j] = (size.clone() - T::one()) / size.clone() * snapshot[i][j].clone()
                    + (w[p][j].clone() - others) / size.clone();
            }
        }
    }
    w
}

/// Per-node variance of the refined frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceLedger {
    /// Base variance per node; infinite for nodes without an estimate.
    pub base: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl PriPLTree {
    /// Numerical variance of every refined node frequency. Requires a
    /// prior `refine`.
    pub fn node_variances(&self) -> VarianceLedger {
        let n = self.nodes.len();
        let base: Vec<Option<f64>> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, node)| {
                let v = if k == 0 {
                    0.0
                } else if node.is_leaf() {
                    node.var_avg
                } else if node.freq_oue.is_some() {
                    node.var_oue
                } else {
                    f64::INFINITY
                };
                v.is_finite().then_some(v)
            })
            .collect();
        let shape = LedgerShape {
            children: self.nodes.iter().map(|x| x.children.clone()).collect(),
            d_plus: self.nodes.iter().map(|x| x.in_d_plus).collect(),
        };
        let weights = propagate_weights(&shape, &base);
        let variances = (0..n)
            .map(|k| weighted_variance(&weights[k], &base).unwrap_or(f64::INFINITY))
            .collect();
        VarianceLedger {
            base: base.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            weights,
            variances,
        }
    }
}
