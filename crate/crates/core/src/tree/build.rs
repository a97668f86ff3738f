use super::{PriPLTree, TreeNode};
use crate::error::{Error, Result};
use crate::fit::PLFunction;

/// Expected squared-error weight of a node with interval `[l_k, r_k]` under
/// parent `[l_p, r_p]`, averaged over all ranges of `[1, d]`.
pub fn node_weight(lk: usize, rk: usize, lp: usize, rp: usize, d: usize) -> f64 {
    let own = lk as f64 * (d - rk + 1) as f64;
    let par = lp as f64 * (d - rp + 1) as f64;
    (own - par) / (d as f64 * (d as f64 + 1.0) / 2.0)
}

#[derive(Debug, Clone)]
struct SkelNode {
    lo: usize,
    hi: usize,
    children: Vec<usize>,
    parent: Option<usize>,
    alive: bool,
}

/// Mutable tree shape used while deciding which inner nodes to drop.
#[derive(Debug, Clone)]
pub struct Skeleton {
    nodes: Vec<SkelNode>,
    d: usize,
}

impl Skeleton {
    /// Balanced binary tree over the given leaf intervals, under a root
    /// spanning the whole domain. A single interval still gets its own leaf.
    pub fn balanced(intervals: &[(usize, usize)]) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptyInput("tree needs at least one interval"));
        }
        let d = intervals.last().unwrap().1;
        let mut expect = 1;
        for &(lo, hi) in intervals {
            if lo != expect || hi < lo {
                return Err(Error::InvalidConfig(format!(
                    "intervals do not tile [1, {d}] at {lo}"
                )));
            }
            expect = hi + 1;
        }
        let mut sk = Skeleton { nodes: Vec::new(), d };
        let root = sk.push(1, d, None);
        if intervals.len() == 1 {
            let leaf = sk.push(1, d, Some(root));
            sk.nodes[root].children.push(leaf);
        } else {
            let half = intervals.len() / 2;
            let l = sk.grow(&intervals[..half], root);
            let r = sk.grow(&intervals[half..], root);
            sk.nodes[root].children = vec![l, r];
        }
        Ok(sk)
    }

    fn push(&mut self, lo: usize, hi: usize, parent: Option<usize>) -> usize {
        self.nodes.push(SkelNode {
            lo,
            hi,
            children: Vec::new(),
            parent,
            alive: true,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, ivs: &[(usize, usize)], parent: usize) -> usize {
        let id = self.push(ivs[0].0, ivs[ivs.len() - 1].1, Some(parent));
        if ivs.len() > 1 {
            let half = ivs.len() / 2;
            let l = self.grow(&ivs[..half], id);
            let r = self.grow(&ivs[half..], id);
            self.nodes[id].children = vec![l, r];
        }
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interval(&self, k: usize) -> (usize, usize) {
        (self.nodes[k].lo, self.nodes[k].hi)
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.nodes[k].children
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.nodes[k].parent
    }

    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk(0, &mut out);
        out
    }

    fn walk(&self, k: usize, out: &mut Vec<usize>) {
        for &c in &self.nodes[k].children {
            self.walk(c, out);
        }
        out.push(k);
    }

    fn heights(&self) -> Vec<usize> {
        let mut h = vec![0; self.nodes.len()];
        for k in self.postorder() {
            h[k] = self.nodes[k]
                .children
                .iter()
                .map(|&c| h[c])
                .max()
                .unwrap_or(0)
                + 1;
        }
        h
    }

    /// Expected allocation share of every live node. The root keeps no users.
    pub fn alloc_ratios(&self, alpha: f64) -> Vec<f64> {
        let h = self.heights();
        let mut ratio = vec![0.0; self.nodes.len()];
        let mut pool = vec![0.0; self.nodes.len()];
        pool[0] = 1.0 - alpha;
        let mut queue = vec![0];
        let mut i = 0;
        while i < queue.len() {
            let k = queue[i];
            i += 1;
            let passed = if k == 0 {
                pool[0]
            } else {
                ratio[k] = pool[k] / h[k] as f64;
                pool[k] - ratio[k]
            };
            for &c in &self.nodes[k].children {
                pool[c] = passed;
                queue.push(c);
            }
        }
        ratio
    }

    fn weight(&self, k: usize) -> f64 {
        let p = self.nodes[k].parent.expect("root has no weight");
        let (lk, rk) = self.interval(k);
        let (lp, rp) = self.interval(p);
        node_weight(lk, rk, lp, rp, self.d)
    }

    fn error_over(&self, set: &[usize], alpha: f64) -> f64 {
        let ratio = self.alloc_ratios(alpha);
        set.iter()
            .filter(|&&k| k != 0 && self.nodes[k].alive)
            .map(|&k| self.weight(k) / ratio[k])
            .sum()
    }

    /// Nodes whose error term changes when `k` is removed: its proper
    /// ancestors below the root and its whole subtree.
    fn affected(&self, k: usize) -> Vec<usize> {
        let mut set = Vec::new();
        let mut a = self.nodes[k].parent;
        while let Some(p) = a {
            if p != 0 {
                set.push(p);
            }
            a = self.nodes[p].parent;
        }
        self.walk(k, &mut set);
        set
    }

    /// Error over the affected set before and after removing inner node `k`.
    pub fn removal_errors(&self, k: usize, alpha: f64) -> Result<(f64, f64)> {
        if k == 0 || k >= self.nodes.len() || !self.nodes[k].alive || self.nodes[k].children.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "node {k} is not a removable inner node"
            )));
        }
        let set = self.affected(k);
        let before = self.error_over(&set, alpha);
        let mut trial = self.clone();
        trial.remove(k)?;
        let after = trial.error_over(&set, alpha);
        Ok((before, after))
    }

    /// Splices inner node `k` out, handing its children to its parent.
    pub fn remove(&mut self, k: usize) -> Result<()> {
        let p = match self.nodes[k].parent {
            Some(p) if !self.nodes[k].children.is_empty() => p,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "node {k} is not a removable inner node"
                )))
            }
        };
        let kids = std::mem::take(&mut self.nodes[k].children);
        for &c in &kids {
            self.nodes[c].parent = Some(p);
        }
        let pos = self.nodes[p].children.iter().position(|&c| c == k).unwrap();
        self.nodes[p].children.splice(pos..=pos, kids);
        self.nodes[k].alive = false;
        self.nodes[k].parent = None;
        Ok(())
    }

    /// Visits inner non-root nodes in postorder and removes each one whose
    /// removal lowers the expected error. Returns the removed ids.
    pub fn reduce(&mut self, alpha: f64) -> Vec<usize> {
        let mut removed = Vec::new();
        for k in self.postorder() {
            if k == 0 || self.nodes[k].children.is_empty() {
                continue;
            }
            let (before, after) = self.removal_errors(k, alpha).expect("inner node");
            if after < before {
                self.remove(k).expect("inner node");
                removed.push(k);
            }
        }
        removed
    }

    /// Compacts into a tree arena in preorder with allocation ratios filled in.
    pub fn into_tree(self, alpha: f64, epsilon: f64) -> PriPLTree {
        let ratio = self.alloc_ratios(alpha);
        let mut nodes = Vec::with_capacity(self.len());
        fn copy(sk: &Skeleton, k: usize, parent: Option<usize>, ratio: &[f64], out: &mut Vec<TreeNode>) -> usize {
            let id = out.len();
            out.push(TreeNode {
                interval: sk.interval(k),
                parent,
                alloc_ratio: ratio[k],
                ..TreeNode::default()
            });
            for &c in &sk.nodes[k].children {
                let cid = copy(sk, c, Some(id), ratio, out);
                out[id].children.push(cid);
            }
            id
        }
        copy(&self, 0, None, &ratio, &mut nodes);
        let mut tree = PriPLTree {
            nodes,
            d: self.d,
            epsilon,
            n_phase1: 0,
            n_phase2: 0,
        };
        tree.nodes[0].freq_final = 1.0;
        tree.nodes[0].freq_avg = 1.0;
        tree.refresh_heights();
        tree
    }
}

/// Builds and reduces the tree shape for a PL fit. Leaves receive the
/// fitted interval masses and slopes.
pub fn build_structure(pl: &PLFunction, alpha: f64, epsilon: f64) -> Result<PriPLTree> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1)")));
    }
    let bps = &pl.breakpoints;
    let ivs: Vec<_> = (1..=bps.segments()).map(|k| bps.interval(k)).collect();
    let mut sk = Skeleton::balanced(&ivs)?;
    sk.reduce(alpha);
    let mut tree = sk.into_tree(alpha, epsilon);
    tree.set_fit(pl)?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> Vec<(usize, usize)> {
        vec![(1, 200), (201, 400), (401, 600), (601, 800), (801, 1000)]
    }

    #[test]
    fn balanced_shape() {
        let sk = Skeleton::balanced(&five()).unwrap();
        assert_eq!(sk.len(), 9);
        assert_eq!(sk.children(0).len(), 2);
        let right = sk.children(0)[1];
        assert_eq!(sk.interval(right), (401, 1000));
    }

    #[test]
    fn single_interval_gets_leaf() {
        let sk = Skeleton::balanced(&[(1, 10)]).unwrap();
        assert_eq!(sk.len(), 2);
        let t = sk.into_tree(0.2, 1.0);
        assert_eq!(t.leaves(), vec![1]);
        assert!((t.nodes[1].alloc_ratio - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ratios_sum_along_paths() {
        let sk = Skeleton::balanced(&five()).unwrap();
        let r = sk.alloc_ratios(0.2);
        let t = sk.into_tree(0.2, 1.0);
        for leaf in t.leaves() {
            let mut s = 0.0;
            let mut k = Some(leaf);
            while let Some(i) = k {
                s += t.nodes[i].alloc_ratio;
                k = t.nodes[i].parent;
            }
            assert!((s - 0.8).abs() < 1e-12);
        }
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn weight_of_root_child_spanning_domain_is_zero() {
        assert_eq!(node_weight(1, 10, 1, 10, 10), 0.0);
        assert!(node_weight(3, 5, 1, 10, 10) > 0.0);
    }

    #[test]
    fn removal_splices_children() {
        let mut sk = Skeleton::balanced(&five()).unwrap();
        let right = sk.children(0)[1];
        sk.remove(right).unwrap();
        assert_eq!(sk.children(0).len(), 3);
        assert!(sk.remove(0).is_err());
    }

    #[test]
    fn gap_rejected() {
        assert!(Skeleton::balanced(&[(1, 3), (5, 6)]).is_err());
    }
}
