use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use pripl_core::bench::{run_bench, BenchConfig, Method};
use pripl_core::data::{generate, ingest_csv, read_cache, write_cache, GeneratorSpec, Kind};
use pripl_core::multidim::{build_model, MultiDimConfig, MultiDimModel};
use pripl_core::rng::seeded;
use pripl_core::tree::{build_tree, PriPLTree};

#[derive(Parser)]
#[command(name = "pripl", version, about = "Private range queries with piecewise-linear trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long, default_value_t = 0.8)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 127)]
    phi: usize,
    #[arg(long, default_value_t = 32)]
    kmax: usize,
    #[arg(long, default_value_t = 0.04)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file whose fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ModelFlags {
    fn model_config(&self) -> Result<MultiDimConfig> {
        let mut cfg = MultiDimConfig::default();
        cfg.tree.epsilon = self.epsilon;
        cfg.tree.alpha = self.alpha;
        cfg.tree.phi = self.phi;
        cfg.tree.k_max = self.kmax;
        cfg.eta = self.eta;
        overlay(cfg, self.config.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, or bucketize a CSV file, into a cache file.
    GenData {
        #[arg(long, default_value = "gaussian")]
        kind: String,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Number of attributes.
        #[arg(long, default_value_t = 1)]
        dims: usize,
        #[arg(long, default_value_t = 1024)]
        domain: usize,
        #[arg(long, default_value_t = 0.0)]
        cov: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Read this CSV instead of sampling.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Comma-separated CSV column names.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a single-attribute tree and write it as JSON.
    #[command(name = "build-1d")]
    Build1d {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        attr: usize,
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a multi-attribute model into a directory.
    BuildMd {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a range query from a saved tree file or model directory.
    Query {
        #[arg(long)]
        model: PathBuf,
        /// Ranges as `attr:l:r`, repeated per attribute.
        #[arg(long = "range", required = true)]
        ranges: Vec<String>,
    },
    /// Run repeated builds against a query workload and report MSE.
    Bench {
        /// Comma-separated privacy budgets.
        #[arg(long, value_delimiter = ',', default_value = "0.8")]
        epsilon: Vec<f64>,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value_t = 127)]
        phi: usize,
        #[arg(long, default_value_t = 32)]
        kmax: usize,
        #[arg(long, default_value_t = 0.04)]
        eta: f64,
        /// Attributes per query.
        #[arg(long, default_value_t = 1)]
        dims: usize,
        #[arg(long, default_value_t = 0.5)]
        volume: f64,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset cache; a synthetic set from the config is used otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also run the naive histogram baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for report.json, report.csv and timings.json.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Serializes `base`, overlays the JSON object in `path` and reads it back.
fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(base);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, patch);
    Ok(serde_json::from_value(value)?)
}

fn merge(dst: &mut Value, patch: Value) {
    match (dst, patch) {
        (Value::Object(d), Value::Object(p)) => {
            for (k, v) in p {
                merge(d.entry(k).or_insert(Value::Null), v);
            }
        }
        (d, p) => *d = p,
    }
}

fn parse_range(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, l, r] = parts.as_slice() else {
        bail!("range {s:?} is not attr:l:r");
    };
    Ok((a.parse()?, l.parse()?, r.parse()?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenData {
            kind,
            n,
            dims,
            domain,
            cov,
            seed,
            csv,
            columns,
            out,
        } => {
            let ds = match csv {
                Some(path) => {
                    if columns.is_empty() {
                        bail!("--csv needs --columns");
                    }
                    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
                    ingest_csv(&path, &names, &vec![domain; names.len()])?
                }
                None => {
                    let kind: Kind = kind.parse()?;
                    generate(&GeneratorSpec::new(kind, n, dims, domain, cov, seed))?
                }
            };
            write_cache(&ds, &out)?;
            println!("wrote {} records × {} attributes to {}", ds.n(), ds.m(), out.display());
        }
        Command::Build1d { data, attr, flags, out } => {
            let ds = read_cache(&data)?;
            if attr >= ds.m() {
                bail!("attribute {attr} not in dataset with {} attributes", ds.m());
            }
            let cfg = flags.model_config()?;
            let tree = build_tree(ds.column(attr), ds.domains[attr], &cfg.tree, &mut seeded(flags.seed))?;
            fs::write(&out, serde_json::to_vec_pretty(&tree)?).with_context(|| format!("writing {}", out.display()))?;
            println!("tree with {} leaves written to {}", tree.leaves().len(), out.display());
        }
        Command::BuildMd { data, flags, out } => {
            let ds = read_cache(&data)?;
            let model = build_model(&ds, &flags.model_config()?, flags.seed)?;
            model.save(&out)?;
            println!("model with {} trees and {} grids written to {}", model.m(), model.grids.len(), out.display());
        }
        Command::Query { model, ranges } => {
            let ranges = ranges.iter().map(|r| parse_range(r)).collect::<Result<Vec<_>>>()?;
            let answer = if model.is_dir() {
                let m = MultiDimModel::load(&model)?;
                match ranges.as_slice() {
                    [(a, l, r)] => m.answer_1d(*a, *l, *r)?,
                    [(a, la, ra), (b, lb, rb)] => m.answer_2d(*a, (*la, *ra), *b, (*lb, *rb))?,
                    many => m.answer_multi(many)?,
                }
            } else {
                let tree: PriPLTree = serde_json::from_slice(&fs::read(&model)?)?;
                match ranges.as_slice() {
                    [(_, l, r)] => tree.answer_1d(*l, *r)?,
                    _ => bail!("a single tree answers one range"),
                }
            };
            println!("{answer}");
        }
        Command::Bench {
            epsilon,
            alpha,
            phi,
            kmax,
            eta,
            dims,
            volume,
            queries,
            repeats,
            seed,
            data,
            baseline,
            config,
            out,
        } => {
            let mut cfg = BenchConfig {
                epsilons: epsilon,
                lambda: dims,
                volume,
                queries,
                repeats,
                seed,
                ..BenchConfig::default()
            };
            cfg.model.tree.alpha = alpha;
            cfg.model.tree.phi = phi;
            cfg.model.tree.k_max = kmax;
            cfg.model.eta = eta;
            if baseline {
                cfg.methods.push(Method::Naive);
            }
            let cfg = overlay(cfg, config.as_deref())?;
            let ds = match data {
                Some(p) => read_cache(&p)?,
                None => generate(&cfg.data)?,
            };
            let outcome = run_bench(&cfg, &ds)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), serde_json::to_vec_pretty(&outcome)?)?;
            fs::write(out.join("report.csv"), outcome.to_csv())?;
            fs::write(out.join("timings.json"), serde_json::to_vec_pretty(&outcome.timings)?)?;
            for r in &outcome.reports {
                println!("{:?} eps={} mse={:.4e}", r.method, r.epsilon, r.mse);
            }
        }
    }
    Ok(())
}
