use std::io::Write;

use rand::Rng as _;

use pripl_core::bench::{gen_queries, ground_truth, mse, run_bench, BenchConfig, Method, Query, QuerySpec};
use pripl_core::data::{generate, ingest_csv, read_cache, write_cache, GeneratorSpec, Kind};
use pripl_core::rng::seeded;

fn moments(col: &[usize]) -> (f64, f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
    let m2 = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let m4 = col.iter().map(|&v| (v as f64 - mean).powi(4)).sum::<f64>() / n;
    (mean, m2, m4 / (m2 * m2))
}

fn correlation(a: &[usize], b: &[usize]) -> f64 {
    let (ma, va, _) = moments(a);
    let (mb, vb, _) = moments(b);
    let cov = a.iter().zip(b).map(|(&x, &y)| (x as f64 - ma) * (y as f64 - mb)).sum::<f64>() / a.len() as f64;
    cov / (va * vb).sqrt()
}

#[test]
fn gaussian_columns_are_platykurtic_and_unimodal() {
    let ds = generate(&GeneratorSpec::new(Kind::Gaussian, 1_000_000, 2, 256, 0.0, 1)).unwrap();
    let (_, _, kurt) = moments(ds.column(0));
    assert!(kurt < 3.0, "kurtosis {kurt}");
    let mut hist = vec![0usize; 257];
    for &v in ds.column(0) {
        hist[v] += 1;
    }
    // unimodal after light smoothing
    let smooth: Vec<usize> = (1..=252).map(|v| hist[v..v + 5].iter().sum()).collect();
    let peak = (0..smooth.len()).max_by_key(|&i| smooth[i]).unwrap();
    assert!(smooth[..peak].windows(2).filter(|w| w[1] < w[0]).count() < 3);
    assert!(smooth[peak..].windows(2).filter(|w| w[1] > w[0]).count() < 3);
    let r = correlation(ds.column(0), ds.column(1));
    assert!(r.abs() < 0.02, "correlation {r}");
}

#[test]
fn covariance_shows_up_in_sample_correlation() {
    let ds = generate(&GeneratorSpec::new(Kind::Gaussian, 200_000, 3, 64, 0.6, 2)).unwrap();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let r = correlation(ds.column(a), ds.column(b));
        assert!((r - 0.6).abs() < 0.08, "correlation {r}");
    }
}

#[test]
fn csv_max_value_lands_in_last_bucket() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let mut rng = seeded(3);
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a,b").unwrap();
    let rows: Vec<(f64, f64)> = (0..500).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(0.0..1e6))).collect();
    for (a, b) in &rows {
        writeln!(f, "{a},{b}").unwrap();
    }
    drop(f);
    let ds = ingest_csv(&path, &["a", "b"], &[32, 100]).unwrap();
    for (j, key) in [(0usize, 0usize), (1, 1)] {
        let vals: Vec<f64> = rows.iter().map(|r| if key == 0 { r.0 } else { r.1 }).collect();
        let argmax = (0..vals.len()).max_by(|&x, &y| vals[x].total_cmp(&vals[y])).unwrap();
        let argmin = (0..vals.len()).min_by(|&x, &y| vals[x].total_cmp(&vals[y])).unwrap();
        assert_eq!(ds.column(j)[argmax], ds.domains[j]);
        assert_eq!(ds.column(j)[argmin], 1);
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
        assert!(order.windows(2).all(|w| ds.column(j)[w[0]] <= ds.column(j)[w[1]]));
    }

    let cache = dir.path().join("x.bin");
    write_cache(&ds, &cache).unwrap();
    assert_eq!(read_cache(&cache).unwrap(), ds);
}

#[test]
fn full_volume_queries_cover_domain() {
    let qs = gen_queries(&QuerySpec { lambda: 2, volume: 1.0, count: 100, seed: 1 }, &[10, 20, 30]).unwrap();
    for q in qs {
        for (j, l, r) in q.ranges {
            assert_eq!((l, r), (1, [10, 20, 30][j]));
        }
    }
}

#[test]
fn left_endpoints_are_uniform() {
    let qs = gen_queries(&QuerySpec { lambda: 1, volume: 0.5, count: 100_000, seed: 2 }, &[20]).unwrap();
    let mut counts = [0f64; 11];
    for q in &qs {
        let (_, l, r) = q.ranges[0];
        assert_eq!(r - l + 1, 10);
        counts[l - 1] += 1.0;
    }
    let expect = qs.len() as f64 / 11.0;
    let chi2: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
    // 10 degrees of freedom, p = 0.001
    assert!(chi2 < 29.59, "chi2 {chi2}");
}

#[test]
fn ground_truth_matches_brute_force() {
    let ds = generate(&GeneratorSpec::new(Kind::Zipf, 5_000, 3, 16, 0.0, 4)).unwrap();
    for lambda in 1..=3 {
        let qs = gen_queries(&QuerySpec { lambda, volume: 0.4, count: 30, seed: 5 }, &ds.domains).unwrap();
        let truth = ground_truth(&ds, &qs);
        let brute: Vec<f64> = qs
            .iter()
            .map(|q: &Query| {
                (0..ds.n())
                    .filter(|&u| q.ranges.iter().all(|&(j, l, r)| (l..=r).contains(&ds.column(j)[u])))
                    .count() as f64
                    / ds.n() as f64
            })
            .collect();
        assert_eq!(truth, brute);
        assert_eq!(mse(&truth, &brute), 0.0);
    }
}

#[test]
fn bench_reports_are_reproducible() {
    let cfg = BenchConfig {
        data: GeneratorSpec::new(Kind::Cauchy, 10_000, 1, 64, 0.0, 6),
        methods: vec![Method::Pripl, Method::Naive],
        epsilons: vec![1.0, 2.0],
        queries: 40,
        repeats: 3,
        seed: 6,
        ..BenchConfig::default()
    };
    let ds = generate(&cfg.data).unwrap();
    let a = run_bench(&cfg, &ds).unwrap();
    let b = run_bench(&cfg, &ds).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.reports.len(), 4);
    assert!(a.reports.iter().all(|r| r.per_repeat.len() == 3 && r.mse.is_finite()));
    assert_eq!(a.to_csv().lines().count(), 1 + 4 * 3);
}
