use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{oue_variance, OueParams};
use crate::rng::Rng;
use crate::tree::PriPLTree;

/// A 2-D grid over an attribute pair with per-dimension cell bounds.
///
/// `row_bounds` has `g_i + 1` entries starting at 1 and ending at `d_i + 1`;
/// row cell `a` spans `[row_bounds[a], row_bounds[a + 1] - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGrid {
    pub attrs: (usize, usize),
    pub row_bounds: Vec<usize>,
    pub col_bounds: Vec<usize>,
    /// Row-major `g_i × g_j` cell frequencies.
    pub cell_freqs: Vec<f64>,
    /// Threshold below which a marginal cell is considered noise.
    pub sigma_bar: f64,
    pub n_users: usize,
}

impl AdaptiveGrid {
    pub fn rows(&self) -> usize {
        self.row_bounds.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.col_bounds.len() - 1
    }

    pub fn cell(&self, a: usize, b: usize) -> f64 {
        self.cell_freqs[a * self.cols() + b]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.cell_freqs.chunks(self.cols()).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        for row in self.cell_freqs.chunks(self.cols()) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Cell index along one dimension holding bucket `v`.
    pub fn locate(bounds: &[usize], v: usize) -> usize {
        bounds.partition_point(|&s| s <= v) - 1
    }

    /// Perturbs each user's cell with OUE over all cells and stores the
    /// calibrated frequencies. `rows`/`cols` are 1-based bucket values.
    pub fn estimate(&mut self, rows: &[usize], cols: &[usize], epsilon: f64, rng: &mut Rng) -> Result<()> {
        if rows.len() != cols.len() {
            return Err(Error::Ragged {
                expected: rows.len(),
                found: cols.len(),
                index: 0,
            });
        }
        if rows.is_empty() {
            return Err(Error::Population {
                structure: format!("grid {:?}", self.attrs),
                available: 0,
                required: 1,
            });
        }
        let (di, dj) = (*self.row_bounds.last().unwrap() - 1, *self.col_bounds.last().unwrap() - 1);
        let g = self.rows() * self.cols();
        let mut truth = vec![0u64; g];
        for (&x, &y) in rows.iter().zip(cols) {
            if x < 1 || x > di || y < 1 || y > dj {
                return Err(Error::InputDomain(format!("pair ({x}, {y}) outside grid domain")));
            }
            truth[Self::locate(&self.row_bounds, x) * self.cols() + Self::locate(&self.col_bounds, y)] += 1;
        }
        let oue = OueParams::new(epsilon, g)?;
        let n = rows.len() as u64;
        let counts = oue.simulate_counts(&truth, n, rng);
        self.cell_freqs = oue.calibrate(&counts, n)?;
        self.n_users = rows.len();
        Ok(())
    }
}

/// Cost model for a candidate grid: `2 g_i g_j σ² C + η (Σ f_a²)(Σ f_b²)`.
#[derive(Debug, Clone, Copy)]
pub struct GridCost {
    /// `σ² · C(m, 2)` with `σ²` the OUE variance over all users.
    pub noise: f64,
    pub eta: f64,
}

impl GridCost {
    pub fn new(epsilon: f64, n_total: usize, m: usize, eta: f64) -> Self {
        let pairs = (m * (m - 1) / 2) as f64;
        GridCost {
            noise: oue_variance(epsilon, n_total as f64) * pairs,
            eta,
        }
    }

    pub fn sigma_bar(&self) -> f64 {
        (2.0 * self.noise).sqrt()
    }

    pub fn error(&self, gi: usize, gj: usize, sq_i: f64, sq_j: f64) -> f64 {
        2.0 * (gi * gj) as f64 * self.noise + self.eta * sq_i * sq_j
    }
}

#[derive(Debug, Clone)]
struct Marginal {
    /// Cell bounds as `g + 1` starts with a trailing `d + 1`.
    bounds: Vec<usize>,
    prefix: Vec<f64>,
}

impl Marginal {
    fn new(bounds: Vec<usize>, hist: &[f64]) -> Self {
        let mut prefix = vec![0.0; hist.len() + 1];
        for (i, h) in hist.iter().enumerate() {
            prefix[i + 1] = prefix[i] + h;
        }
        Marginal { bounds, prefix }
    }

    fn cells(&self) -> usize {
        self.bounds.len() - 1
    }

    fn mass(&self, lo: usize, end: usize) -> f64 {
        self.prefix[end - 1] - self.prefix[lo - 1]
    }

    fn freq(&self, a: usize) -> f64 {
        self.mass(self.bounds[a], self.bounds[a + 1])
    }

    fn sq(&self) -> f64 {
        (0..self.cells()).map(|a| self.freq(a).powi(2)).sum()
    }

    /// Cut minimizing `|left − right|`, lowest on ties.
    fn halve(&self, a: usize) -> Option<usize> {
        let (lo, end) = (self.bounds[a], self.bounds[a + 1]);
        if end - lo < 2 {
            return None;
        }
        let total = self.mass(lo, end);
        (lo + 1..end)
            .map(|c| (c, (2.0 * self.mass(lo, c) - total).abs()))
            .fold(None, |best: Option<(usize, f64)>, (c, gap)| match best {
                Some((_, g)) if g <= gap => best,
                _ => Some((c, gap)),
            })
            .map(|(c, _)| c)
    }
}

/// Adapts grid lines for an attribute pair starting from the trees' leaf
/// partitions. High-mass marginal cells are halved while that lowers the
/// cost and stays above the noise floor; low-mass cells are then merged
/// with neighbours while that lowers the cost or either side is below the
/// floor.
pub fn adaptive_partition(
    attrs: (usize, usize),
    tree_i: &PriPLTree,
    tree_j: &PriPLTree,
    cost: &GridCost,
) -> AdaptiveGrid {
    let leaf_bounds = |t: &PriPLTree| {
        let mut b: Vec<usize> = t.leaves().iter().map(|&l| t.nodes[l].interval.0).collect();
        b.push(t.d + 1);
        b
    };
    let mut dims = [
        Marginal::new(leaf_bounds(tree_i), &tree_i.histogram()),
        Marginal::new(leaf_bounds(tree_j), &tree_j.histogram()),
    ];
    let floor = cost.sigma_bar();

    // split phase: open cells keyed by (dim, start)
    let mut open: Vec<(usize, usize)> = (0..2)
        .flat_map(|t| dims[t].bounds[..dims[t].cells()].iter().map(move |&s| (t, s)).collect::<Vec<_>>())
        .collect();
    let mut closed: Vec<(usize, usize)> = Vec::new();
    while !open.is_empty() {
        let (pos, &(t, start)) = open
            .iter()
            .enumerate()
            .max_by(|x, y| {
                let fx = freq_at(&dims[x.1 .0], x.1 .1);
                let fy = freq_at(&dims[y.1 .0], y.1 .1);
                fx.total_cmp(&fy).then(y.1.cmp(x.1))
            })
            .unwrap();
        open.swap_remove(pos);
        let a = dims[t].bounds.iter().position(|&s| s == start).unwrap();
        let f = dims[t].freq(a);
        let accepted = dims[t].halve(a).filter(|_| f > floor).and_then(|cut| {
            let before = cost.error(dims[0].cells(), dims[1].cells(), dims[0].sq(), dims[1].sq());
            let mut trial = dims.clone();
            trial[t].bounds.insert(a + 1, cut);
            let after = cost.error(trial[0].cells(), trial[1].cells(), trial[0].sq(), trial[1].sq());
            (after < before).then_some((cut, trial))
        });
        match accepted {
            Some((cut, trial)) => {
                dims = trial;
                open.push((t, start));
                open.push((t, cut));
            }
            None => closed.push((t, start)),
        }
    }

    // merge phase
    let mut pending = closed;
    while !pending.is_empty() {
        let (pos, &(t, start)) = pending
            .iter()
            .enumerate()
            .min_by(|x, y| {
                let fx = freq_at(&dims[x.1 .0], x.1 .1);
                let fy = freq_at(&dims[y.1 .0], y.1 .1);
                fx.total_cmp(&fy).then(x.1.cmp(y.1))
            })
            .unwrap();
        pending.swap_remove(pos);
        let dim = &dims[t];
        let a = dim.bounds.iter().position(|&s| s == start).unwrap();
        let f = dim.freq(a);
        let mut neigh: Vec<usize> = Vec::new();
        if a > 0 {
            neigh.push(a - 1);
        }
        if a + 1 < dim.cells() {
            neigh.push(a + 1);
        }
        let in_pending = |b: usize| pending.contains(&(t, dim.bounds[b]));
        let below = f < floor;
        let candidates: Vec<usize> = if neigh.iter().any(|&b| in_pending(b)) {
            neigh.iter().copied().filter(|&b| in_pending(b)).collect()
        } else if below {
            neigh.clone()
        } else {
            Vec::new()
        };
        let Some(b) = candidates
            .into_iter()
            .min_by(|&x, &y| dim.freq(x).total_cmp(&dim.freq(y)).then(x.cmp(&y)))
        else {
            continue;
        };
        let merged = f + dim.freq(b);
        let before = cost.error(dims[0].cells(), dims[1].cells(), dims[0].sq(), dims[1].sq());
        let mut trial = dims.clone();
        let (lo, hi) = (a.min(b), a.max(b));
        trial[t].bounds.remove(hi);
        let after = cost.error(trial[0].cells(), trial[1].cells(), trial[0].sq(), trial[1].sq());
        let partner = (t, dims[t].bounds[b]);
        let partner_pending = pending.contains(&partner);
        pending.retain(|&c| c != partner);
        if below || merged <= floor || after < before {
            let start = trial[t].bounds[lo];
            dims = trial;
            if partner_pending || merged < floor {
                pending.push((t, start));
            }
        }
    }
    AdaptiveGrid {
        attrs,
        row_bounds: dims[0].bounds.clone(),
        col_bounds: dims[1].bounds.clone(),
        cell_freqs: vec![0.0; dims[0].cells() * dims[1].cells()],
        sigma_bar: floor,
        n_users: 0,
    }
}

fn freq_at(dim: &Marginal, start: usize) -> f64 {
    let a = dim.bounds.iter().position(|&s| s == start).unwrap();
    dim.freq(a)
}
