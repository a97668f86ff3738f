//! Range-query estimation under local differential privacy using
//! piecewise-linear hierarchical trees and data-aware 2-D grids.
//!
//! The crate is organised bottom-up:
//!
//!  - [`oracle`]: user-side perturbation and aggregator-side decoding for
//!    Optimal Unary Encoding (categorical frequencies) and the Square Wave
//!    mechanism (numerical distributions).
//!  - [`fit`]: continuous piecewise-linear fitting of a noisy histogram with
//!    greedy breakpoint search.
//!  - [`tree`]: the piecewise-linear tree built over fitted segments, user
//!    allocation, node estimation, refinement, 1-D range queries and
//!    numerical variance tracking.
//!  - [`multidim`]: per-attribute trees plus adaptive pairwise grids,
//!    cross-structure consistency and weighted-update query answering.
//!  - [`data`]: synthetic generators, CSV ingestion and the dataset cache.
//!  - [`bench`]: query workloads, exact ground truth and MSE reports.

pub mod bench;
pub mod data;
pub mod error;
pub mod fit;
pub mod multidim;
pub mod oracle;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
