use super::grid::AdaptiveGrid;
use crate::error::{Error, Result};

/// Dense `d_i × d_j` joint estimate for one attribute pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub dims: (usize, usize),
    /// Row-major values.
    pub values: Vec<f64>,
    /// Rounds used and the final largest constraint residual.
    pub rounds: usize,
    pub residual: f64,
    prefix: Vec<f64>,
}

impl ResponseMatrix {
    /// Proportional updates from the outer product of the two per-value
    /// histograms: rows to `hist_i`, columns to `hist_j`, then each grid
    /// block to its cell frequency, until every residual is below `tol`.
    pub fn fit(hist_i: &[f64], hist_j: &[f64], grid: &AdaptiveGrid, tol: f64, max_rounds: usize) -> Self {
        let (di, dj) = (hist_i.len(), hist_j.len());
        let mut m: Vec<f64> = hist_i
            .iter()
            .flat_map(|&a| hist_j.iter().map(move |&b| a * b))
            .collect();
        let row_cell: Vec<usize> = (1..=di).map(|v| AdaptiveGrid::locate(&grid.row_bounds, v)).collect();
        let col_cell: Vec<usize> = (1..=dj).map(|v| AdaptiveGrid::locate(&grid.col_bounds, v)).collect();
        let g_j = grid.cols();
        let mut rounds = 0;
        let mut residual;
        loop {
            let (rows, cols, blocks) = sums(&m, di, dj, &row_cell, &col_cell, grid);
            residual = rows
                .iter()
                .zip(hist_i)
                .chain(cols.iter().zip(hist_j))
                .chain(blocks.iter().zip(&grid.cell_freqs))
                .map(|(s, t)| (s - t).abs())
                .fold(0.0, f64::max);
            if residual < tol || rounds >= max_rounds {
                break;
            }
            rounds += 1;
            for v in 0..di {
                rescale(&mut m, v * dj, 1, dj, hist_i[v]);
            }
            for w in 0..dj {
                rescale(&mut m, w, dj, di, hist_j[w]);
            }
            let (_, _, blocks) = sums(&m, di, dj, &row_cell, &col_cell, grid);
            for v in 0..di {
                for w in 0..dj {
                    let c = row_cell[v] * g_j + col_cell[w];
                    let target = grid.cell_freqs[c].max(0.0);
                    let idx = v * dj + w;
                    m[idx] = if blocks[c] > 0.0 {
                        m[idx] * target / blocks[c]
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut out = ResponseMatrix {
            dims: (di, dj),
            values: m,
            rounds,
            residual,
            prefix: Vec::new(),
        };
        out.build_prefix();
        out
    }

    fn build_prefix(&mut self) {
        let (di, dj) = self.dims;
        let mut p = vec![0.0; (di + 1) * (dj + 1)];
        for v in 0..di {
            for w in 0..dj {
                p[(v + 1) * (dj + 1) + w + 1] =
                    self.values[v * dj + w] + p[v * (dj + 1) + w + 1] + p[(v + 1) * (dj + 1) + w] - p[v * (dj + 1) + w];
            }
        }
        self.prefix = p;
    }

    /// Mass over the 1-based inclusive rectangle.
    pub fn range_sum(&self, (li, ri): (usize, usize), (lj, rj): (usize, usize)) -> Result<f64> {
        let (di, dj) = self.dims;
        if li < 1 || li > ri || ri > di || lj < 1 || lj > rj || rj > dj {
            return Err(Error::InputDomain(format!(
                "rectangle [{li}, {ri}] × [{lj}, {rj}] outside {di} × {dj}"
            )));
        }
        let w = dj + 1;
        let p = &self.prefix;
        Ok(p[ri * w + rj] - p[(li - 1) * w + rj] - p[ri * w + lj - 1] + p[(li - 1) * w + lj - 1])
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.values.chunks(self.dims.1).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.1];
        for r in self.values.chunks(self.dims.1) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }
}

/// Scales `count` entries starting at `start` with `stride` to sum to `target`.
fn rescale(m: &mut [f64], start: usize, stride: usize, count: usize, target: f64) {
    let idx = (0..count).map(|t| start + t * stride);
    let s: f64 = idx.clone().map(|i| m[i]).sum();
    if s > 0.0 {
        let k = target / s;
        idx.for_each(|i| m[i] *= k);
    } else if target > 0.0 {
        idx.for_each(|i| m[i] = target / count as f64);
    }
}

fn sums(
    m: &[f64],
    di: usize,
    dj: usize,
    row_cell: &[usize],
    col_cell: &[usize],
    grid: &AdaptiveGrid,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; di];
    let mut cols = vec![0.0; dj];
    let mut blocks = vec![0.0; grid.cell_freqs.len()];
    let g_j = grid.cols();
    for v in 0..di {
        for w in 0..dj {
            let x = m[v * dj + w];
            rows[v] += x;
            cols[w] += x;
            blocks[row_cell[v] * g_j + col_cell[w]] += x;
        }
    }
    (rows, cols, blocks)
}

/// Fits a `2^λ` table to pairwise `2 × 2` tables by proportional updates
/// and returns the all-inside cell. `pairs[(a, b)]` is indexed by
/// `[in_a & in_b, in_a & !in_b, !in_a & in_b, !in_a & !in_b]`.
pub fn fit_binary_table(lambda: usize, pairs: &[((usize, usize), [f64; 4])], tol: f64, max_rounds: usize) -> f64 {
    let size = 1usize << lambda;
    let mut t = vec![1.0 / size as f64; size];
    let inside = |cell: usize, a: usize| cell & (1 << a) != 0;
    for _ in 0..max_rounds {
        let mut change: f64 = 0.0;
        for &((a, b), table) in pairs {
            let mut sums = [0.0; 4];
            for (c, v) in t.iter().enumerate() {
                sums[quadrant(inside(c, a), inside(c, b))] += v;
            }
            for (c, v) in t.iter_mut().enumerate() {
                let q = quadrant(inside(c, a), inside(c, b));
                let new = if sums[q] > 0.0 { *v * table[q] / sums[q] } else { table[q] / (size / 4) as f64 };
                change = change.max((new - *v).abs());
                *v = new;
            }
        }
        if change < tol {
            break;
        }
    }
    t[size - 1]
}

fn quadrant(in_a: bool, in_b: bool) -> usize {
    match (in_a, in_b) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}
