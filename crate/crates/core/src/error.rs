//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,

    #[error("matrix is not positive definite ({context})")]
    NotSpd { context: String },

    #[error("singular conditional block in component {component}")]
    SingularBlock { component: usize },

    #[error("prediction component {component} produced a non-SPD precision")]
    PredictionNotSpd { component: usize },

    #[error("mixture is not normalized")]
    UnnormalizedMixture,

    #[error("mixture must contain at least one component")]
    EmptyMixture,

    #[error("invalid block index: {0}")]
    InvalidBlockIndex(String),

    #[error("non-finite value encountered in {what}")]
    NonFinite { what: String },

    #[error("optimizer did not converge after {iterations} iterations (best value {best_value}, gradient norm {gradient_norm})")]
    OptimizerFailed {
        iterations: usize,
        best_value: f64,
        gradient_norm: f64,
        best_point: Vec<f64>,
    },

    #[error("no start point with finite target density")]
    NoFiniteStart,

    #[error("weight fit produced an all-zero solution")]
    AllWeightsZero,

    #[error("degenerate point cloud: covariance not repairable within jitter cap")]
    DegeneratePoints,

    #[error("importance weights are all degenerate (proposal misses target support)")]
    ImportanceDegenerate,

    #[error("EM component {component} collapsed below the responsibility floor")]
    ComponentCollapse { component: usize },

    #[error("all population runs have failed")]
    AllRunsFailed,

    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
