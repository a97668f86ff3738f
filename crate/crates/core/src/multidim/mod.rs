//! Multi-attribute range queries from per-attribute trees and pairwise
//! adaptive grids.

mod answer;
mod consistency;
mod grid;

pub use answer::{fit_binary_table, ResponseMatrix};
pub use grid::{adaptive_partition, AdaptiveGrid, GridCost};

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, substream};
use crate::tree::{build_tree, PriPLTree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiDimConfig {
    pub tree: TreeConfig,
    /// Weight of the within-cell approximation term in the grid cost.
    pub eta: f64,
    pub update_tol: f64,
    pub update_rounds: usize,
    pub consistency_tol: f64,
    pub consistency_rounds: usize,
}

impl Default for MultiDimConfig {
    fn default() -> Self {
        MultiDimConfig {
            tree: TreeConfig::default(),
            eta: 0.04,
            update_tol: 1e-6,
            update_rounds: 200,
            consistency_tol: 1e-9,
            consistency_rounds: 100,
        }
    }
}

/// All attribute pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn attribute_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

/// Disjoint user groups: one per attribute tree, then one per pair grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Populations {
    pub trees: Vec<Vec<usize>>,
    pub grids: Vec<Vec<usize>>,
}

/// Shuffles `n` users into `m` tree groups of `n / (2m)` and `C(m, 2)` grid
/// groups of `n / (2 C(m, 2))`. Leftover users go one each to the groups
/// in order.
pub fn split_populations(n: usize, m: usize, seed: u64) -> Result<Populations> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 attributes, got {m}")));
    }
    let pairs = m * (m - 1) / 2;
    let structures = m + pairs;
    if n < structures {
        return Err(Error::Population {
            structure: format!("{m} trees and {pairs} grids"),
            available: n,
            required: structures,
        });
    }
    let mut sizes: Vec<usize> = (0..m)
        .map(|_| n / (2 * m))
        .chain((0..pairs).map(|_| n / (2 * pairs)))
        .collect();
    let left = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut().take(left) {
        *s += 1;
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut seeded(seed));
    let mut groups = Vec::with_capacity(structures);
    let mut at = 0;
    for s in sizes {
        groups.push(ids[at..at + s].to_vec());
        at += s;
    }
    let grids = groups.split_off(m);
    Ok(Populations { trees: groups, grids })
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    epsilon: f64,
    m: usize,
    n_users: usize,
    eta: f64,
    seed: u64,
    config: MultiDimConfig,
}

/// Summary of the grid alignment rounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsistencyReport {
    pub rounds: Vec<usize>,
    pub residuals: Vec<f64>,
}

#[derive(Debug)]
pub struct MultiDimModel {
    pub trees: Vec<PriPLTree>,
    /// Grids in [`attribute_pairs`] order.
    pub grids: Vec<AdaptiveGrid>,
    pub epsilon: f64,
    pub n_users: usize,
    pub eta: f64,
    pub seed: u64,
    pub config: MultiDimConfig,
    matrices: Vec<OnceLock<ResponseMatrix>>,
}

impl MultiDimModel {
    fn assemble(trees: Vec<PriPLTree>, grids: Vec<AdaptiveGrid>, n_users: usize, seed: u64, config: MultiDimConfig) -> Self {
        let matrices = (0..grids.len()).map(|_| OnceLock::new()).collect();
        MultiDimModel {
            trees,
            grids,
            epsilon: config.tree.epsilon,
            n_users,
            eta: config.eta,
            seed,
            config,
            matrices,
        }
    }

    pub fn m(&self) -> usize {
        self.trees.len()
    }

    fn grid_index(&self, i: usize, j: usize) -> Result<usize> {
        let m = self.m();
        if i == j || i >= m || j >= m {
            return Err(Error::InputDomain(format!("no grid for attributes ({i}, {j})")));
        }
        let (a, b) = (i.min(j), i.max(j));
        Ok(a * (2 * m - a - 1) / 2 + (b - a - 1))
    }

    /// Variance of one grid cell estimate.
    pub fn cell_variance(&self) -> f64 {
        GridCost::new(self.epsilon, self.n_users, self.m(), self.eta).sigma_bar().powi(2)
    }

    /// Aligns tree leaves with every grid, then fits each grid to the
    /// updated attribute histograms.
    pub fn consistency_refine(&mut self) -> ConsistencyReport {
        let cell_var = self.cell_variance();
        for attr in 0..self.m() {
            let tree = &mut self.trees[attr];
            let ledger = tree.node_variances();
            let mut leaf_var: Vec<f64> = tree.leaves().iter().map(|&l| ledger.variances[l]).collect();
            consistency::align_leaves(tree, attr, &mut leaf_var, &self.grids, cell_var);
        }
        let mut report = ConsistencyReport::default();
        for grid in &mut self.grids {
            let (i, j) = grid.attrs;
            let rows = consistency::cell_targets(&self.trees[i].histogram(), &grid.row_bounds);
            let cols = consistency::cell_targets(&self.trees[j].histogram(), &grid.col_bounds);
            let (residual, rounds) = consistency::fit_grid(
                grid,
                &rows,
                &cols,
                self.config.consistency_tol,
                self.config.consistency_rounds,
            );
            if residual >= self.config.consistency_tol {
                log::warn!("grid {:?} still moving by {residual:.3e} after {rounds} rounds", grid.attrs);
            }
            report.rounds.push(rounds);
            report.residuals.push(residual);
        }
        self.matrices = (0..self.grids.len()).map(|_| OnceLock::new()).collect();
        report
    }

    /// The fitted joint estimate for an attribute pair, oriented as `(i, j)`
    /// with `i < j`.
    pub fn response_matrix(&self, i: usize, j: usize) -> Result<&ResponseMatrix> {
        let g = self.grid_index(i, j)?;
        Ok(self.matrices[g].get_or_init(|| {
            let grid = &self.grids[g];
            let (a, b) = grid.attrs;
            ResponseMatrix::fit(
                &self.trees[a].histogram(),
                &self.trees[b].histogram(),
                grid,
                self.config.update_tol,
                self.config.update_rounds,
            )
        }))
    }

    pub fn answer_1d(&self, attr: usize, l: usize, r: usize) -> Result<f64> {
        self.trees
            .get(attr)
            .ok_or_else(|| Error::InputDomain(format!("no attribute {attr}")))?
            .answer_1d(l, r)
    }

    /// Estimated fraction of records with attribute `i` in `range_i` and
    /// attribute `j` in `range_j`.
    pub fn answer_2d(&self, i: usize, range_i: (usize, usize), j: usize, range_j: (usize, usize)) -> Result<f64> {
        let mat = self.response_matrix(i, j)?;
        if i < j {
            mat.range_sum(range_i, range_j)
        } else {
            mat.range_sum(range_j, range_i)
        }
    }

    /// Estimate for a conjunction of `λ > 2` ranges `(attr, l, r)`.
    pub fn answer_multi(&self, ranges: &[(usize, usize, usize)]) -> Result<f64> {
        let lambda = ranges.len();
        if lambda <= 2 || lambda > self.m() {
            return Err(Error::InputDomain(format!(
                "multi-attribute query needs 2 < λ ≤ {}, got {lambda}",
                self.m()
            )));
        }
        let mut seen = vec![false; self.m()];
        for &(a, _, _) in ranges {
            if a >= self.m() || std::mem::replace(&mut seen[a], true) {
                return Err(Error::InputDomain(format!("attribute {a} missing or repeated")));
            }
        }
        let singles = ranges
            .iter()
            .map(|&(a, l, r)| self.answer_1d(a, l, r))
            .collect::<Result<Vec<_>>>()?;
        let mut pairs = Vec::new();
        let mut cap = f64::INFINITY;
        for x in 0..lambda {
            for y in x + 1..lambda {
                let (a, la, ra) = ranges[x];
                let (b, lb, rb) = ranges[y];
                let both = self.answer_2d(a, (la, ra), b, (lb, rb))?.max(0.0);
                cap = cap.min(both);
                let table = [
                    both,
                    (singles[x] - both).max(0.0),
                    (singles[y] - both).max(0.0),
                    (1.0 - singles[x] - singles[y] + both).max(0.0),
                ];
                pairs.push(((x, y), table));
            }
        }
        let est = fit_binary_table(lambda, &pairs, self.config.update_tol, self.config.update_rounds);
        Ok(est.clamp(0.0, cap))
    }

    /// Writes `trees/`, `grids/` and `manifest.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let write = |p: &Path, bytes: Vec<u8>| fs::write(p, bytes).map_err(|e| Error::io(p, e));
        for sub in ["trees", "grids"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for (i, t) in self.trees.iter().enumerate() {
            write(&dir.join(format!("trees/tree_{i}.json")), serde_json::to_vec_pretty(t)?)?;
        }
        for g in &self.grids {
            let (i, j) = g.attrs;
            write(&dir.join(format!("grids/grid_{i}_{j}.json")), serde_json::to_vec_pretty(g)?)?;
        }
        let manifest = Manifest {
            epsilon: self.epsilon,
            m: self.m(),
            n_users: self.n_users,
            eta: self.eta,
            seed: self.seed,
            config: self.config,
        };
        write(&dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join("manifest.json"))?)?;
        let trees = (0..manifest.m)
            .map(|i| Ok(serde_json::from_slice(&read(&dir.join(format!("trees/tree_{i}.json")))?)?))
            .collect::<Result<Vec<PriPLTree>>>()?;
        let grids = attribute_pairs(manifest.m)
            .into_iter()
            .map(|(i, j)| Ok(serde_json::from_slice(&read(&dir.join(format!("grids/grid_{i}_{j}.json")))?)?))
            .collect::<Result<Vec<AdaptiveGrid>>>()?;
        Ok(Self::assemble(trees, grids, manifest.n_users, manifest.seed, manifest.config))
    }
}

/// Builds trees and grids on disjoint user groups and aligns them.
pub fn build_model(ds: &Dataset, cfg: &MultiDimConfig, seed: u64) -> Result<MultiDimModel> {
    cfg.tree.validate()?;
    if !(cfg.eta >= 0.0) {
        return Err(Error::InvalidConfig(format!("eta must be non-negative, got {}", cfg.eta)));
    }
    let m = ds.m();
    let n = ds.n();
    let pops = split_populations(n, m, seed)?;
    let trees = pops
        .trees
        .par_iter()
        .enumerate()
        .map(|(j, ids)| {
            let values: Vec<usize> = ids.iter().map(|&u| ds.columns[j][u]).collect();
            build_tree(&values, ds.domains[j], &cfg.tree, &mut substream(seed, 1 + j as u64)).map_err(|e| match e {
                Error::Population { available, required, .. } => Error::Population {
                    structure: format!("tree for attribute {j}"),
                    available,
                    required,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cost = GridCost::new(cfg.tree.epsilon, n, m, cfg.eta);
    let grids = attribute_pairs(m)
        .into_par_iter()
        .zip(pops.grids.par_iter())
        .enumerate()
        .map(|(g, ((i, j), ids))| {
            let mut grid = adaptive_partition((i, j), &trees[i], &trees[j], &cost);
            let rows: Vec<usize> = ids.iter().map(|&u| ds.columns[i][u]).collect();
            let cols: Vec<usize> = ids.iter().map(|&u| ds.columns[j][u]).collect();
            grid.estimate(&rows, &cols, cfg.tree.epsilon, &mut substream(seed, 1 + (m + g) as u64))?;
            Ok(grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = MultiDimModel::assemble(trees, grids, n, seed, *cfg);
    model.consistency_refine();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_shares() {
        let p = split_populations(1000, 2, 1).unwrap();
        assert_eq!(p.trees.iter().map(Vec::len).collect::<Vec<_>>(), vec![250, 250]);
        assert_eq!(p.grids[0].len(), 500);
        let p = split_populations(2003, 5, 1).unwrap();
        assert_eq!(p.trees.len() + p.grids.len(), 15);
        assert_eq!(p.trees[0].len(), 2003 / 10 + 1);
        assert_eq!(p.grids[9].len(), 2003 / 20);
        let total: usize = p.trees.iter().chain(&p.grids).map(Vec::len).sum();
        assert_eq!(total, 2003);
    }

    #[test]
    fn too_few_users_named() {
        match split_populations(2, 2, 0) {
            Err(Error::Population { structure, .. }) => assert!(structure.contains("grids")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pair_order() {
        assert_eq!(attribute_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
    }
}
