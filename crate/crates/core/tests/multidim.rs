use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng as _;

use pripl_core::data::{generate, Dataset, GeneratorSpec, Kind};
use pripl_core::fit::{fit_segments, Breakpoints};
use pripl_core::multidim::{
    adaptive_partition, build_model, split_populations, AdaptiveGrid, GridCost, MultiDimConfig, MultiDimModel,
    ResponseMatrix,
};
use pripl_core::rng::seeded;
use pripl_core::tree::{build_structure, PriPLTree, TreeConfig};

fn uniform_dataset(n: usize, m: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let columns = (0..m).map(|_| (0..n).map(|_| rng.random_range(1..=d)).collect()).collect();
    Dataset::new(vec![d; m], columns, "uniform".into()).unwrap()
}

fn config(eps: f64) -> MultiDimConfig {
    MultiDimConfig {
        tree: TreeConfig {
            epsilon: eps,
            ..TreeConfig::default()
        },
        ..MultiDimConfig::default()
    }
}

/// Noise-free tree whose leaves follow `hist` under the given cut points.
fn exact_tree(hist: &[f64], points: Vec<usize>) -> PriPLTree {
    let pl = fit_segments(hist, &Breakpoints::new(points).unwrap()).unwrap();
    let mut tree = build_structure(&pl, 0.2, 1.0).unwrap();
    for k in tree.leaves() {
        let (lo, hi) = tree.nodes[k].interval;
        tree.nodes[k].freq_final = hist[lo - 1..hi].iter().sum();
    }
    tree.refresh_from_leaves();
    tree
}

fn marginal(tree: &PriPLTree, bounds: &[usize]) -> Vec<f64> {
    let h = tree.histogram();
    bounds.windows(2).map(|w| h[w[0] - 1..w[1] - 1].iter().sum()).collect()
}

#[test]
fn population_shares() {
    let p = split_populations(4000, 2, 1).unwrap();
    assert_eq!((p.trees.len(), p.grids.len()), (2, 1));
    assert_eq!((p.trees[0].len(), p.trees[1].len(), p.grids[0].len()), (1000, 1000, 2000));
    let p = split_populations(20_000, 5, 1).unwrap();
    assert_eq!(p.trees.len() + p.grids.len(), 15);
    assert!(p.grids.iter().all(|g| g.len() == 1000));
}

#[test]
fn zero_eta_keeps_leaf_cuts() {
    let d = 64;
    let hist: Vec<f64> = (1..=d).map(|v| (v as f64).sqrt()).collect();
    let total: f64 = hist.iter().sum();
    let hist: Vec<f64> = hist.iter().map(|x| x / total).collect();
    let ti = exact_tree(&hist, vec![1, 17, 33, 49, 64]);
    let tj = exact_tree(&hist, vec![1, 9, 40, 64]);
    let cost = GridCost { noise: 1e-9, eta: 0.0 };
    let g = adaptive_partition((0, 1), &ti, &tj, &cost);
    let leaf_cuts = |t: &PriPLTree| -> HashSet<usize> { t.leaves().iter().map(|&l| t.nodes[l].interval.0).collect() };
    assert!(g.row_bounds[..g.rows()].iter().all(|b| leaf_cuts(&ti).contains(b)));
    assert!(g.col_bounds[..g.cols()].iter().all(|b| leaf_cuts(&tj).contains(b)));
}

#[test]
fn uniform_marginals_split_to_equal_frequency_optimum() {
    let d = 64;
    let hist = vec![1.0 / d as f64; d];
    let t = exact_tree(&hist, vec![1, d]);
    let eta = 0.04;
    let cost = GridCost {
        noise: eta / 512.0,
        eta,
    };
    let g = adaptive_partition((0, 1), &t, &t, &cost);
    let rows = marginal(&t, &g.row_bounds);
    let cols = marginal(&t, &g.col_bounds);
    assert!(rows.iter().all(|f| (f - rows[0]).abs() < 1e-12));
    assert!(cols.iter().all(|f| (f - cols[0]).abs() < 1e-12));
    let err = |gi: usize, gj: usize| cost.error(gi, gj, 1.0 / gi as f64, 1.0 / gj as f64);
    let best = (1..=8)
        .flat_map(|gi| (1..=8).map(move |gj| (gi, gj)))
        .map(|(gi, gj)| err(gi, gj))
        .fold(f64::INFINITY, f64::min);
    assert!((err(g.rows(), g.cols()) - best).abs() < 1e-15, "{}x{}", g.rows(), g.cols());
}

#[test]
fn exact_correlated_pair_concentrates_on_diagonal() {
    let d = 16;
    let hist = vec![1.0 / d as f64; d];
    let bounds: Vec<usize> = (1..=d + 1).collect();
    let cells = (0..d * d).map(|i| if i / d == i % d { 1.0 / d as f64 } else { 0.0 }).collect();
    let grid = AdaptiveGrid {
        attrs: (0, 1),
        row_bounds: bounds.clone(),
        col_bounds: bounds,
        cell_freqs: cells,
        sigma_bar: 0.0,
        n_users: 0,
    };
    let rm = ResponseMatrix::fit(&hist, &hist, &grid, 1e-9, 200);
    let diag: f64 = (0..d).map(|v| rm.values[v * d + v]).sum();
    assert!(diag >= 0.9 * rm.values.iter().sum::<f64>());
}

#[test]
fn built_model_properties() {
    let ds = generate(&GeneratorSpec::new(Kind::Gaussian, 60_000, 3, 32, 0.5, 2)).unwrap();
    let model = build_model(&ds, &config(1.0), 5).unwrap();

    for g in &model.grids {
        let (i, j) = g.attrs;
        for (bounds, tree) in [(&g.row_bounds, &model.trees[i]), (&g.col_bounds, &model.trees[j])] {
            let f = marginal(tree, bounds);
            if f.len() > 1 {
                assert!(f.iter().all(|&x| x > 0.0));
            }
        }
        let rm = model.response_matrix(i, j).unwrap();
        assert!((rm.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((model.answer_2d(i, (1, 32), j, (1, 32)).unwrap() - 1.0).abs() < 1e-6);
        let rows = marginal(&model.trees[i], &g.row_bounds);
        for (a, r) in rows.iter().enumerate() {
            let s: f64 = (0..g.cols()).map(|b| g.cell(a, b)).sum();
            assert!((s - r).abs() < 1e-6);
        }
    }

    let full = [(0, 1, 32), (1, 1, 32), (2, 1, 32)];
    assert!((model.answer_multi(&full).unwrap() - 1.0).abs() < 1e-6);

    let mut rng = seeded(8);
    for _ in 0..50 {
        let ranges: Vec<(usize, usize, usize)> = (0..3)
            .map(|a| {
                let l = rng.random_range(1..=32);
                (a, l, rng.random_range(l..=32))
            })
            .collect();
        let got = model.answer_multi(&ranges).unwrap();
        let mut cap = f64::INFINITY;
        for x in 0..3 {
            for y in x + 1..3 {
                let (_, lx, rx) = ranges[x];
                let (_, ly, ry) = ranges[y];
                cap = cap.min(model.answer_2d(x, (lx, rx), y, (ly, ry)).unwrap().max(0.0));
            }
        }
        assert!(got >= -1e-6 && got <= cap + 1e-6, "{got} > {cap}");
    }
}

#[test]
fn construction_grids_respect_noise_floor() {
    let ds = generate(&GeneratorSpec::new(Kind::MixGaussian, 40_000, 2, 64, 0.0, 3)).unwrap();
    let cfg = config(1.0);
    let trees: Vec<PriPLTree> = (0..2)
        .map(|j| pripl_core::tree::build_tree(ds.column(j), 64, &cfg.tree, &mut seeded(j as u64)).unwrap())
        .collect();
    let cost = GridCost::new(1.0, ds.n(), 2, cfg.eta);
    let g = adaptive_partition((0, 1), &trees[0], &trees[1], &cost);
    for (bounds, tree) in [(&g.row_bounds, &trees[0]), (&g.col_bounds, &trees[1])] {
        let f = marginal(tree, bounds);
        if f.len() > 1 {
            assert!(f.iter().all(|&x| x >= cost.sigma_bar()), "{f:?} floor {}", cost.sigma_bar());
        }
    }
}

#[test]
fn independent_uniform_triple_intersection() {
    let ds = uniform_dataset(300_000, 3, 32, 4);
    let model = build_model(&ds, &config(2.0), 6).unwrap();
    let got = model.answer_multi(&[(0, 1, 16), (1, 1, 16), (2, 1, 16)]).unwrap();
    assert!((got - 0.125).abs() < 0.025, "{got}");
}

#[test]
fn second_consistency_pass_is_a_fixpoint() {
    let ds = generate(&GeneratorSpec::new(Kind::Gaussian, 40_000, 2, 32, 0.3, 7)).unwrap();
    let mut model = build_model(&ds, &config(1.0), 7).unwrap();
    let leaves = |m: &MultiDimModel| -> Vec<f64> { m.trees.iter().flat_map(|t| t.histogram()).collect() };
    let (before_leaves, before_cells) = (leaves(&model), model.grids[0].cell_freqs.clone());
    model.consistency_refine();
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap(&before_leaves, &leaves(&model)) < 1e-9);
    assert!(gap(&before_cells, &model.grids[0].cell_freqs) < 1e-9);
}

#[test]
fn saved_model_answers_identically() {
    let ds = generate(&GeneratorSpec::new(Kind::Gaussian, 30_000, 3, 32, 0.4, 9)).unwrap();
    let model = build_model(&ds, &config(1.0), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = MultiDimModel::load(dir.path()).unwrap();
    assert_eq!(model.answer_1d(0, 3, 20).unwrap(), back.answer_1d(0, 3, 20).unwrap());
    assert_eq!(
        model.answer_2d(0, (3, 20), 2, (5, 9)).unwrap(),
        back.answer_2d(0, (3, 20), 2, (5, 9)).unwrap()
    );
    let q = [(0, 3, 20), (1, 1, 30), (2, 5, 9)];
    assert_eq!(model.answer_multi(&q).unwrap(), back.answer_multi(&q).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn populations_are_disjoint_and_complete(n in 100usize..5_000, m in 2usize..6, seed in 0u64..1000) {
        let p = split_populations(n, m, seed).unwrap();
        let mut all: Vec<usize> = p.trees.iter().chain(&p.grids).flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
