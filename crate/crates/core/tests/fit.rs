use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;

use pripl_core::fit::{fit_segments, partition_intervals, Breakpoints, FitConfig, PLFunction};
use pripl_core::rng::seeded;

/// Least squares over the hinge basis `{1, v, (v − s_k)+}` solved through
/// the normal equations; returns the residual sum of squares.
fn hinge_rss(hist: &[f64], bps: &Breakpoints) -> f64 {
    let d = hist.len();
    let interior = &bps.points()[1..bps.points().len() - 1];
    let cols = 2 + interior.len();
    let x = DMatrix::from_fn(d, cols, |i, j| {
        let v = (i + 1) as f64;
        match j {
            0 => 1.0,
            1 => v,
            _ => (v - interior[j - 2] as f64).max(0.0),
        }
    });
    let y = DVector::from_column_slice(hist);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let coef = xtx.lu().solve(&xty).unwrap();
    (y - x * coef).norm_squared()
}

fn random_hist(d: usize, rng: &mut pripl_core::rng::Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

#[test]
fn fixed_breakpoints_match_dense_solver() {
    let mut rng = seeded(3);
    for _ in 0..50 {
        let hist = random_hist(32, &mut rng);
        let mut cuts = [rng.random_range(3..=30), rng.random_range(3..=30)];
        cuts.sort_unstable();
        if cuts[0] == cuts[1] {
            continue;
        }
        let bps = Breakpoints::new(vec![1, cuts[0], cuts[1], 32]).unwrap();
        let pl = fit_segments(&hist, &bps).unwrap();
        let oracle = hinge_rss(&hist, &bps);
        assert!((pl.total_rss() - oracle).abs() < 1e-12, "{} vs {oracle}", pl.total_rss());
    }
}

#[test]
fn noise_floor_formula() {
    let e = 0.8f64.exp();
    let sigma = (4.0 * e / (1e6 * (e - 1.0).powi(2))).sqrt();
    let got = FitConfig::noise_floor_for(0.8, 1_000_000, 0.2);
    assert!((got - sigma * 0.8f64.sqrt()).abs() < 1e-15);
    assert!((sigma - 2.43456e-3).abs() < 1e-8);
}

fn intercept_form_total(pl: &PLFunction) -> f64 {
    let knots = pl.knot_values();
    let s = pl.breakpoints.points();
    (1..=pl.segments())
        .map(|k| {
            let (lo, hi) = pl.breakpoints.interval(k);
            let slope = pl.beta[k];
            let b = knots[k - 1] - slope * s[k - 1] as f64;
            let w = (hi - lo + 1) as f64;
            w * b + slope * (lo + hi) as f64 * w / 2.0
        })
        .sum()
}

#[test]
fn kmax_two_caps_breakpoints() {
    let mut rng = seeded(4);
    let hist = random_hist(100, &mut rng);
    let cfg = FitConfig {
        k_max: 2,
        ..FitConfig::default()
    };
    assert!(partition_intervals(&hist, &hist, &cfg).unwrap().breakpoints.points().len() <= 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pointwise_and_interval_sums_agree(seed in 0u64..100_000, d in 8usize..200, k in 1usize..6) {
        let mut rng = seeded(seed);
        let hist = random_hist(d, &mut rng);
        let k = k.min(d / 3);
        let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, d - 3, k.saturating_sub(1))
            .into_iter()
            .map(|c| c + 3)
            .collect();
        cuts.sort_unstable();
        let pts: Vec<usize> = std::iter::once(1).chain(cuts).chain([d]).collect();
        let pl = fit_segments(&hist, &Breakpoints::new(pts).unwrap()).unwrap();
        let pointwise: f64 = pl.histogram().iter().sum();
        prop_assert!((pointwise - intercept_form_total(&pl)).abs() < 1e-10);
        for j in 1..pl.segments() {
            let s = pl.breakpoints.points()[j];
            prop_assert!((pl.eval_in(j, s) - pl.eval_in(j + 1, s)).abs() < 1e-10);
        }
    }

    #[test]
    fn greedy_search_respects_budget(seed in 0u64..100_000, d in 8usize..300, k_max in 2usize..20) {
        let mut rng = seeded(seed);
        let hist = random_hist(d, &mut rng);
        let cfg = FitConfig { k_max, ..FitConfig::default() };
        let pl = partition_intervals(&hist, &hist, &cfg).unwrap();
        prop_assert!(pl.segments() <= k_max);
        prop_assert_eq!(pl.histogram().len(), d);
    }
}
