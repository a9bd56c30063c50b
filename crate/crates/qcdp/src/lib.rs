//! Numerical laboratory for the two-dimensional directed polymer in random
//! environment in the quasi-critical regime.
//!
//! The crate is organised by concern:
//! - [`lattice_rw`]: simple-random-walk kernels and random-walk inequalities;
//! - [`disorder`]: disorder laws, ξ-moments, calibration and sampling;
//! - [`polymer_sim`]: partition-function fields and Monte Carlo samples;
//! - [`chaos_exact`]: exact second moments and the limiting variance;
//! - [`partitions_moments`]: set partitions, exact higher moments and bounds;
//! - [`stats`]: sample summaries and normality diagnostics.

pub mod chaos_exact;
pub mod disorder;
pub mod field;
pub mod lattice_rw;
pub mod numerics;
pub mod partitions_moments;
pub mod polymer_sim;
pub mod stats;

pub use field::{Field, LatticePoint};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
