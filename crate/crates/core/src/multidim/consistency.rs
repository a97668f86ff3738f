use super::grid::AdaptiveGrid;
use crate::tree::{project_children, PriPLTree};

/// Which side of the grid an attribute occupies.
fn side(grid: &AdaptiveGrid, attr: usize) -> Option<bool> {
    if grid.attrs.0 == attr {
        Some(true)
    } else if grid.attrs.1 == attr {
        Some(false)
    } else {
        None
    }
}

/// Boundaries shared by two partitions of the same domain.
fn common_bounds(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

fn inverse_variance(a: f64, va: f64, b: f64, vb: f64) -> (f64, f64) {
    if !va.is_finite() {
        return (b, vb);
    }
    if !vb.is_finite() {
        return (a, va);
    }
    if va + vb == 0.0 {
        return ((a + b) / 2.0, 0.0);
    }
    ((a * vb + b * va) / (va + vb), va * vb / (va + vb))
}

/// Updates the leaf frequencies of `tree` (attribute `attr`) against every
/// grid holding that attribute, in order. `leaf_var` carries the running
/// leaf variances and is updated in place. `cell_var` is the variance of a
/// single grid cell.
pub(crate) fn align_leaves(
    tree: &mut PriPLTree,
    attr: usize,
    leaf_var: &mut [f64],
    grids: &[AdaptiveGrid],
    cell_var: f64,
) {
    let leaves = tree.leaves();
    let mut leaf_bounds: Vec<usize> = leaves.iter().map(|&l| tree.nodes[l].interval.0).collect();
    leaf_bounds.push(tree.d + 1);
    let mut freq: Vec<f64> = leaves.iter().map(|&l| tree.nodes[l].freq_final).collect();
    for grid in grids {
        let Some(is_row) = side(grid, attr) else {
            continue;
        };
        let (bounds, marg, other) = if is_row {
            (&grid.row_bounds, grid.row_sums(), grid.cols())
        } else {
            (&grid.col_bounds, grid.col_sums(), grid.rows())
        };
        let marg_var = other as f64 * cell_var;
        let comps = common_bounds(&leaf_bounds, bounds);
        let (mut li, mut ci) = (0, 0);
        for w in comps.windows(2) {
            let end = w[1];
            let l0 = li;
            while leaf_bounds[li] < end {
                li += 1;
            }
            let c0 = ci;
            while bounds[ci] < end {
                ci += 1;
            }
            let ls = l0..li;
            let cs = c0..ci;
            let tree_sum: f64 = freq[ls.clone()].iter().sum();
            let tree_var: f64 = leaf_var[ls.clone()].iter().sum();
            let grid_sum: f64 = marg[cs.clone()].iter().sum();
            let grid_var = cs.len() as f64 * marg_var;
            let (total, var) = inverse_variance(tree_sum, tree_var, grid_sum, grid_var);
            let (vals, _) = project_children(&freq[ls.clone()], total.max(0.0));
            freq[ls.clone()].copy_from_slice(&vals);
            if tree_var > 0.0 && tree_var.is_finite() {
                for v in &mut leaf_var[ls] {
                    *v *= var / tree_var;
                }
            }
        }
        let (vals, _) = project_children(&freq, 1.0);
        freq = vals;
    }
    for (&l, f) in leaves.iter().zip(freq) {
        tree.nodes[l].freq_final = f;
    }
    tree.refresh_from_leaves();
}

/// Mass of a per-value histogram over each cell of `bounds`.
pub(crate) fn cell_targets(hist: &[f64], bounds: &[usize]) -> Vec<f64> {
    bounds
        .windows(2)
        .map(|w| hist[w[0] - 1..w[1] - 1].iter().sum())
        .collect()
}

/// Alternately projects rows and columns onto their marginal targets.
/// Returns the last round's largest cell change and the rounds used.
pub(crate) fn fit_grid(grid: &mut AdaptiveGrid, rows: &[f64], cols: &[f64], tol: f64, max_rounds: usize) -> (f64, usize) {
    let (g_i, g_j) = (grid.rows(), grid.cols());
    let mut change = f64::INFINITY;
    let mut round = 0;
    while round < max_rounds && change >= tol {
        round += 1;
        let before = grid.cell_freqs.clone();
        for (a, &target) in rows.iter().enumerate() {
            let row = &mut grid.cell_freqs[a * g_j..(a + 1) * g_j];
            let (vals, _) = project_children(row, target);
            row.copy_from_slice(&vals);
        }
        for (b, &target) in cols.iter().enumerate() {
            let col: Vec<f64> = (0..g_i).map(|a| grid.cell_freqs[a * g_j + b]).collect();
            let (vals, _) = project_children(&col, target);
            for (a, v) in vals.into_iter().enumerate() {
                grid.cell_freqs[a * g_j + b] = v;
            }
        }
        change = before
            .iter()
            .zip(&grid.cell_freqs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
    }
    (change, round)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn common_bounds_coarsen() {
        assert_eq!(common_bounds(&[1, 3, 5, 9], &[1, 2, 5, 7, 9]), vec![1, 5, 9]);
    }

    #[test]
    fn grid_fit_reaches_targets() {
        let mut g = AdaptiveGrid {
            attrs: (0, 1),
            row_bounds: vec![1, 3, 5],
            col_bounds: vec![1, 2, 4, 5],
            cell_freqs: vec![0.3, -0.05, 0.1, 0.2, 0.25, 0.2],
            sigma_bar: 0.0,
            n_users: 1,
        };
        let rows = [0.45, 0.55];
        let cols = [0.5, 0.2, 0.3];
        let (change, _) = fit_grid(&mut g, &rows, &cols, 1e-12, 1000);
        assert!(change < 1e-12);
        for (s, t) in g.row_sums().iter().zip(rows) {
            assert!((s - t).abs() < 1e-9);
        }
        for (s, t) in g.col_sums().iter().zip(cols) {
            assert!((s - t).abs() < 1e-9);
        }
        assert!(g.cell_freqs.iter().all(|&v| v >= 0.0));
    }
}
