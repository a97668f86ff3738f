use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bucketize, Dataset};
use crate::error::{Error, Result};
use crate::rng::{substream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Gaussian,
    MixGaussian,
    Cauchy,
    Zipf,
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kind::Gaussian),
            "mixgaussian" => Ok(Kind::MixGaussian),
            "cauchy" => Ok(Kind::Cauchy),
            "zipf" => Ok(Kind::Zipf),
            other => Err(Error::InvalidConfig(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: Kind,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Common pairwise correlation of the Gaussian kinds.
    #[serde(default)]
    pub cov: f64,
    pub seed: u64,
    /// Weight of the first mixture component.
    #[serde(default = "half")]
    pub mix_weight: f64,
}

fn half() -> f64 {
    0.5
}

impl GeneratorSpec {
    pub fn new(kind: Kind, n: usize, m: usize, d: usize, cov: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind,
            n,
            m,
            d,
            cov,
            seed,
            mix_weight: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("n and m must be positive".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!("domain size {} below 2", self.d)));
        }
        if !(0.0..1.0).contains(&self.cov) {
            return Err(Error::InvalidConfig(format!("cov {} outside [0, 1)", self.cov)));
        }
        if !(0.0..=1.0).contains(&self.mix_weight) {
            return Err(Error::InvalidConfig(format!(
                "mixture weight {} outside [0, 1]",
                self.mix_weight
            )));
        }
        Ok(())
    }
}

const BLOCK: usize = 1 << 16;
const MIX: [(f64, f64); 2] = [(0.0, 0.5), (3.0, 0.8)];
// tan(0.495π): the central 99% of a standard Cauchy
const CAUCHY_EDGE: f64 = 63.656_741_162_871_54;

/// Samples a dataset. Records are produced in fixed-size blocks, each with
/// its own seed stream, so output does not depend on thread count.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.cov > 0.0 && matches!(spec.kind, Kind::Cauchy | Kind::Zipf) {
        log::warn!("cov ignored for {:?}", spec.kind);
    }
    let zipf_cdf = (spec.kind == Kind::Zipf).then(|| zipf_cdf(spec.d, 1.1));
    let blocks = spec.n.div_ceil(BLOCK);
    let parts: Vec<Vec<Vec<usize>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, b as u64);
            let len = BLOCK.min(spec.n - b * BLOCK);
            let mut cols = vec![Vec::with_capacity(len); spec.m];
            let mut row = vec![0usize; spec.m];
            for _ in 0..len {
                sample_record(spec, zipf_cdf.as_deref(), &mut rng, &mut row);
                for (c, &v) in cols.iter_mut().zip(&row) {
                    c.push(v);
                }
            }
            cols
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(spec.n); spec.m];
    for part in parts {
        for (c, p) in columns.iter_mut().zip(part) {
            c.extend(p);
        }
    }
    Dataset::new(
        vec![spec.d; spec.m],
        columns,
        serde_json::to_string(spec)?,
    )
}

fn sample_record(spec: &GeneratorSpec, zipf: Option<&[f64]>, rng: &mut Rng, out: &mut [usize]) {
    let d = spec.d;
    match spec.kind {
        Kind::Gaussian => loop {
            let z = correlated(spec.cov, rng, out.len());
            if z.iter().all(|x| x.abs() <= 4.0) {
                for (o, x) in out.iter_mut().zip(z) {
                    *o = bucketize(x, -4.0, 4.0, d);
                }
                return;
            }
        },
        Kind::MixGaussian => {
            let (lo, hi) = (MIX[0].0 - 4.0 * MIX[0].1, MIX[1].0 + 4.0 * MIX[1].1);
            loop {
                let (mu, sd) = if rng.random::<f64>() < spec.mix_weight { MIX[0] } else { MIX[1] };
                let z = correlated(spec.cov, rng, out.len());
                let xs: Vec<f64> = z.iter().map(|z| mu + sd * z).collect();
                if xs.iter().all(|x| (lo..=hi).contains(x)) {
                    for (o, x) in out.iter_mut().zip(xs) {
                        *o = bucketize(x, lo, hi, d);
                    }
                    return;
                }
            }
        }
        Kind::Cauchy => {
            for o in out.iter_mut() {
                let x = loop {
                    let a: f64 = StandardNormal.sample(rng);
                    let b: f64 = StandardNormal.sample(rng);
                    let x = a / b;
                    if x.abs() <= CAUCHY_EDGE {
                        break x;
                    }
                };
                *o = bucketize(x, -CAUCHY_EDGE, CAUCHY_EDGE, d);
            }
        }
        Kind::Zipf => {
            let cdf = zipf.expect("cdf prepared");
            for o in out.iter_mut() {
                let u: f64 = rng.random();
                *o = cdf.partition_point(|&c| c < u).min(d - 1) + 1;
            }
        }
    }
}

fn correlated(cov: f64, rng: &mut Rng, m: usize) -> Vec<f64> {
    let shared: f64 = StandardNormal.sample(rng);
    let (a, b) = (cov.sqrt(), (1.0 - cov).sqrt());
    (0..m)
        .map(|_| {
            let own: f64 = StandardNormal.sample(rng);
            a * shared + b * own
        })
        .collect()
}

fn zipf_cdf(d: usize, s: f64) -> Vec<f64> {
    let mut cdf: Vec<f64> = (1..=d).map(|k| (k as f64).powf(-s)).collect();
    let mut acc = 0.0;
    for c in cdf.iter_mut() {
        acc += *c;
        *c = acc;
    }
    cdf.iter_mut().for_each(|c| *c /= acc);
    cdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = GeneratorSpec::new(Kind::MixGaussian, 70_000, 2, 64, 0.3, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn zipf_head_is_largest() {
        let ds = generate(&GeneratorSpec::new(Kind::Zipf, 50_000, 1, 256, 0.0, 1)).unwrap();
        let mut h = vec![0usize; 257];
        for &v in ds.column(0) {
            h[v] += 1;
        }
        assert!(h[2..].iter().all(|&c| c < h[1]));
    }

    #[test]
    fn cov_must_be_below_one() {
        assert!(generate(&GeneratorSpec::new(Kind::Gaussian, 10, 2, 8, 1.0, 0)).is_err());
        assert!(generate(&GeneratorSpec::new(Kind::Gaussian, 10, 2, 1, 0.0, 0)).is_err());
    }

    #[test]
    fn cauchy_is_centered() {
        let ds = generate(&GeneratorSpec::new(Kind::Cauchy, 20_000, 1, 128, 0.0, 2)).unwrap();
        let mid = ds.column(0).iter().filter(|&&v| (60..=69).contains(&v)).count();
        assert!(mid as f64 / 20_000.0 > 0.5);
    }
}
