//! Set partitions, the exact centred-moment expansion of the point-to-point
//! partition function, a path-enumeration oracle for it, and the boundary and
//! bulk upper-bound pipeline.

mod bounds;
mod expansion;
mod partitions;

use thiserror::Error;

use crate::disorder::DisorderError;

pub use bounds::{
    boundary_bulk_bounds, easybound_check, exp_weight_sum, fourth_moment_bound_pipeline,
    green_bound_check, ln_sequence_sums, pair_green_weighted_sum, renewal_laplace_sum,
    weighted_norms, BoundComponents, BoundConstants, ConstantsMode, FourthMomentBound,
    GreenReport, GreenRow, WeightSpec,
};
pub use expansion::{
    moment_expansion_exact, path_oracle_moment, MomentExpansion, EXPANSION_STATE_BUDGET,
    ORACLE_TUPLE_BUDGET,
};
pub use partitions::{
    classify, enumerate_partitions, vector_matches, PartitionCounts, PartitionKind,
    PartitionSequence, SetPartition, MAX_PARTITION_SIZE,
};

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error("partition size h = {0} outside 1..=6")]
    PartitionSize(usize),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("expected {expected} points, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("{what}: size {size} exceeds the budget {limit}")]
    Budget {
        what: &'static str,
        size: u128,
        limit: u128,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("N = {n} is not divisible by M = {m}")]
    NotDivisible { n: usize, m: usize },
    #[error("block index i = {i} outside 1..={m}")]
    BlockIndex { i: usize, m: usize },
    #[error(transparent)]
    Disorder(#[from] DisorderError),
}
