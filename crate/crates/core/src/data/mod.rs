//! Synthetic generators, CSV ingestion and the on-disk dataset cache.
//! All values are 1-based bucket indices.

mod cache;
mod csv_in;
mod synth;

pub use cache::{read_cache, write_cache};
pub use csv_in::ingest_csv;
pub use synth::{generate, GeneratorSpec, Kind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bucketized records stored by attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub domains: Vec<usize>,
    /// `columns[j][i]` is attribute `j` of record `i`.
    pub columns: Vec<Vec<usize>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(domains: Vec<usize>, columns: Vec<Vec<usize>>, provenance: String) -> Result<Self> {
        let ds = Dataset {
            domains,
            columns,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[usize] {
        &self.columns[j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() || self.n() == 0 {
            return Err(Error::EmptyInput("dataset has no records"));
        }
        if self.domains.len() != self.columns.len() {
            return Err(Error::Ragged {
                expected: self.columns.len(),
                found: self.domains.len(),
                index: 0,
            });
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != self.n() {
                return Err(Error::Ragged {
                    expected: self.n(),
                    found: col.len(),
                    index: j,
                });
            }
            let d = self.domains[j];
            if let Some(&v) = col.iter().find(|&&v| v < 1 || v > d) {
                return Err(Error::InputDomain(format!(
                    "attribute {j} holds {v} outside [1, {d}]"
                )));
            }
        }
        Ok(())
    }

    /// Exact fraction of records inside the box `ranges[t] = (attr, l, r)`.
    pub fn range_frequency(&self, ranges: &[(usize, usize, usize)]) -> f64 {
        let hits = (0..self.n())
            .filter(|&i| {
                ranges
                    .iter()
                    .all(|&(j, l, r)| (l..=r).contains(&self.columns[j][i]))
            })
            .count();
        hits as f64 / self.n() as f64
    }
}

/// Equi-width bucket of `x` in `[lo, hi]` over `d` buckets.
pub fn bucketize(x: f64, lo: f64, hi: f64, d: usize) -> usize {
    if hi <= lo {
        return 1;
    }
    let b = ((x - lo) / (hi - lo) * d as f64).floor();
    (b.max(0.0) as usize + 1).min(d)
}
