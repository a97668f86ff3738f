//! Query workloads, exact ground truth and MSE reports.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GeneratorSpec};
use crate::error::{Error, Result};
use crate::multidim::{build_model, MultiDimConfig, MultiDimModel};
use crate::oracle::NoisyHistogram;
use crate::rng::{derive_seed, seeded, substream};
use crate::tree::{build_tree, collect_phase1, PriPLTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub lambda: usize,
    /// Fraction of each queried domain covered by the range.
    pub volume: f64,
    pub count: usize,
    pub seed: u64,
}

/// A conjunction of inclusive 1-based ranges, one per distinct attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub ranges: Vec<(usize, usize, usize)>,
}

pub fn gen_queries(spec: &QuerySpec, domains: &[usize]) -> Result<Vec<Query>> {
    let m = domains.len();
    if spec.lambda == 0 || spec.lambda > m {
        return Err(Error::InvalidConfig(format!(
            "query dimension {} outside [1, {m}]",
            spec.lambda
        )));
    }
    if !(spec.volume > 0.0 && spec.volume <= 1.0) {
        return Err(Error::InvalidConfig(format!("volume {} outside (0, 1]", spec.volume)));
    }
    let widths: Vec<usize> = domains
        .iter()
        .map(|&d| (spec.volume * d as f64).round() as usize)
        .collect();
    if let Some(j) = widths.iter().position(|&w| w < 1) {
        return Err(Error::InvalidConfig(format!(
            "volume {} too small for domain {} of attribute {j}",
            spec.volume, domains[j]
        )));
    }
    let mut rng = seeded(spec.seed);
    Ok((0..spec.count)
        .map(|_| {
            let mut attrs = sample(&mut rng, m, spec.lambda).into_vec();
            attrs.sort_unstable();
            let ranges = attrs
                .into_iter()
                .map(|j| {
                    let l = rng.random_range(1..=domains[j] - widths[j] + 1);
                    (j, l, l + widths[j] - 1)
                })
                .collect();
            Query { ranges }
        })
        .collect())
}

/// Exact answers by counting.
pub fn ground_truth(ds: &Dataset, queries: &[Query]) -> Vec<f64> {
    let prefix: Vec<Vec<u64>> = ds
        .columns
        .iter()
        .zip(&ds.domains)
        .map(|(col, &d)| {
            let mut p = vec![0u64; d + 1];
            for &v in col {
                p[v] += 1;
            }
            for v in 1..=d {
                p[v] += p[v - 1];
            }
            p
        })
        .collect();
    let n = ds.n() as f64;
    queries
        .par_iter()
        .map(|q| match q.ranges.as_slice() {
            [(j, l, r)] => (prefix[*j][*r] - prefix[*j][l - 1]) as f64 / n,
            ranges => ds.range_frequency(ranges),
        })
        .collect()
}

pub fn mse(truth: &[f64], est: &[f64]) -> f64 {
    truth.iter().zip(est).map(|(t, e)| (t - e).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Range answers straight from an EMS histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveHistogram {
    prefix: Vec<f64>,
}

impl NaiveHistogram {
    pub fn new(hist: &NoisyHistogram) -> Self {
        let mut prefix = vec![0.0; hist.freqs_ems.len() + 1];
        for (i, f) in hist.freqs_ems.iter().enumerate() {
            prefix[i + 1] = prefix[i] + f;
        }
        NaiveHistogram { prefix }
    }

    pub fn answer_1d(&self, l: usize, r: usize) -> Result<f64> {
        if l < 1 || l > r || r >= self.prefix.len() {
            return Err(Error::InputDomain(format!("range [{l}, {r}] invalid")));
        }
        Ok(self.prefix[r] - self.prefix[l - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pripl,
    Naive,
}

/// A built estimator for one repeat.
#[derive(Debug)]
pub enum Estimator {
    /// One tree per attribute, each over all users.
    Trees(Vec<PriPLTree>),
    Model(Box<MultiDimModel>),
    Naive(Vec<NaiveHistogram>),
}

impl Estimator {
    pub fn build(method: Method, ds: &Dataset, lambda: usize, cfg: &MultiDimConfig, seed: u64) -> Result<Self> {
        match (method, lambda) {
            (Method::Pripl, 1) => Ok(Estimator::Trees(
                (0..ds.m())
                    .map(|j| build_tree(ds.column(j), ds.domains[j], &cfg.tree, &mut substream(seed, j as u64)))
                    .collect::<Result<_>>()?,
            )),
            (Method::Pripl, _) => Ok(Estimator::Model(Box::new(build_model(ds, cfg, seed)?))),
            (Method::Naive, 1) => Ok(Estimator::Naive(
                (0..ds.m())
                    .map(|j| {
                        let mut rng = substream(seed, j as u64);
                        collect_phase1(ds.column(j), ds.domains[j], cfg.tree.epsilon, &cfg.tree.decode, &mut rng)
                            .map(|h| NaiveHistogram::new(&h))
                    })
                    .collect::<Result<_>>()?,
            )),
            (Method::Naive, _) => Err(Error::InvalidConfig(
                "the naive baseline answers single-attribute queries only".into(),
            )),
        }
    }

    pub fn answer(&self, q: &Query) -> Result<f64> {
        match (self, q.ranges.as_slice()) {
            (Estimator::Trees(t), [(j, l, r)]) => t[*j].answer_1d(*l, *r),
            (Estimator::Naive(h), [(j, l, r)]) => h[*j].answer_1d(*l, *r),
            (Estimator::Model(m), [(j, l, r)]) => m.answer_1d(*j, *l, *r),
            (Estimator::Model(m), [(i, li, ri), (j, lj, rj)]) => m.answer_2d(*i, (*li, *ri), *j, (*lj, *rj)),
            (Estimator::Model(m), ranges) => m.answer_multi(ranges),
            _ => Err(Error::InvalidConfig("estimator cannot answer this query shape".into())),
        }
    }
}

/// A complete benchmark description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub data: GeneratorSpec,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub model: MultiDimConfig,
    pub lambda: usize,
    pub volume: f64,
    pub queries: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            data: GeneratorSpec::new(crate::data::Kind::Gaussian, 100_000, 1, 256, 0.0, 0),
            methods: vec![Method::Pripl],
            epsilons: vec![0.8],
            model: MultiDimConfig::default(),
            lambda: 1,
            volume: 0.5,
            queries: 1000,
            repeats: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub epsilon: f64,
    pub lambda: usize,
    pub volume: f64,
    pub mse: f64,
    pub repeats: usize,
    pub per_repeat: Vec<f64>,
}

/// Wall-clock seconds, kept apart from reports so those stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub epsilon: f64,
    pub build_secs: Vec<f64>,
    pub query_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub config: BenchConfig,
    pub reports: Vec<EvalReport>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl BenchOutcome {
    /// One row per repeat per configuration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,epsilon,lambda,volume,repeat,mse\n");
        for r in &self.reports {
            let method = match r.method {
                Method::Pripl => "pripl",
                Method::Naive => "naive",
            };
            for (i, m) in r.per_repeat.iter().enumerate() {
                out.push_str(&format!("{method},{},{},{},{i},{m:e}\n", r.epsilon, r.lambda, r.volume));
            }
        }
        out
    }
}

/// Runs `repeats` independent builds against one workload and reports MSE.
pub fn evaluate(
    method: Method,
    ds: &Dataset,
    queries: &[Query],
    truth: &[f64],
    cfg: &MultiDimConfig,
    repeats: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let lambda = queries.first().map_or(1, |q| q.ranges.len());
    let runs = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let t0 = Instant::now();
            let est = Estimator::build(method, ds, lambda, cfg, derive_seed(seed, r as u64))?;
            let built = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let answers = queries.iter().map(|q| est.answer(q)).collect::<Result<Vec<_>>>()?;
            Ok((mse(truth, &answers), built, t1.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (m, b, q) in runs {
        out.0.push(m);
        out.1.push(b);
        out.2.push(q);
    }
    Ok(out)
}

/// Runs every method and privacy level of `cfg` on `ds`.
pub fn run_bench(cfg: &BenchConfig, ds: &Dataset) -> Result<BenchOutcome> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let queries = gen_queries(
        &QuerySpec {
            lambda: cfg.lambda,
            volume: cfg.volume,
            count: cfg.queries,
            seed: derive_seed(cfg.seed, u64::MAX),
        },
        &ds.domains,
    )?;
    let truth = ground_truth(ds, &queries);
    let mut reports = Vec::new();
    let mut timings = Vec::new();
    for &method in &cfg.methods {
        for &epsilon in &cfg.epsilons {
            let mut model = cfg.model;
            model.tree.epsilon = epsilon;
            let (per_repeat, build_secs, query_secs) =
                evaluate(method, ds, &queries, &truth, &model, cfg.repeats, cfg.seed)?;
            log::info!("{method:?} eps={epsilon}: mse {:.4e}", per_repeat.iter().sum::<f64>() / cfg.repeats as f64);
            reports.push(EvalReport {
                method,
                epsilon,
                lambda: cfg.lambda,
                volume: cfg.volume,
                mse: per_repeat.iter().sum::<f64>() / per_repeat.len() as f64,
                repeats: cfg.repeats,
                per_repeat,
            });
            timings.push(Timing {
                method,
                epsilon,
                build_secs,
                query_secs,
            });
        }
    }
    Ok(BenchOutcome {
        config: cfg.clone(),
        reports,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_follow_volume() {
        let q = gen_queries(&QuerySpec { lambda: 1, volume: 0.5, count: 50, seed: 1 }, &[10]).unwrap();
        assert!(q.iter().all(|q| q.ranges[0].2 - q.ranges[0].1 + 1 == 5));
        let full = gen_queries(&QuerySpec { lambda: 2, volume: 1.0, count: 5, seed: 1 }, &[7, 9]).unwrap();
        assert!(full.iter().all(|q| q.ranges == vec![(0, 1, 7), (1, 1, 9)]));
    }

    #[test]
    fn bad_specs() {
        let s = QuerySpec { lambda: 1, volume: 0.01, count: 1, seed: 0 };
        assert!(gen_queries(&s, &[10]).is_err());
        assert!(gen_queries(&QuerySpec { lambda: 3, ..s }, &[10, 10]).is_err());
    }

    #[test]
    fn attributes_distinct() {
        let q = gen_queries(&QuerySpec { lambda: 3, volume: 0.5, count: 100, seed: 4 }, &[8; 5]).unwrap();
        for q in q {
            let a: Vec<usize> = q.ranges.iter().map(|r| r.0).collect();
            assert!(a.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn mse_of_constant_zero() {
        assert!((mse(&[0.2, 0.4], &[0.0, 0.0]) - 0.1).abs() < 1e-15);
    }
}
