//! WSG and SEI delta grids, disagreement selection and rank correlation.

mod delta;
mod mve;
mod stats;

use thiserror::Error;

use crate::metrics::MetricId;
use crate::scores::Variant;

pub use delta::{mean_scores, sei_table, wsg_table, DeltaRecord, GroupMean};
pub use mve::{
    correlation_matrix, metric_series, select_disagreement, CorrelationMatrix, DisagreementCase,
    NamedSeries, Selection,
};
pub use stats::{average_ranks, mean, minmax_normalize, pearson, population_std, spearman};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no scored cases for model {model_id}, metric {metric}, variant {variant}")]
    EmptyGroup {
        model_id: String,
        metric: MetricId,
        variant: Variant,
    },
    #[error("original and rephrased tables cover different keys (first: {0})")]
    KeyMismatch(String),
    #[error("injected levels cover different cases than the baseline (first: {0})")]
    CoverageMismatch(String),
    #[error("duplicate score row: {0}")]
    Duplicate(String),
    #[error("sequences differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 observations, got {n}")]
    TooFewObservations { n: usize },
    #[error("series {left} and {right} share {n} case(s); need at least 2")]
    TooFewPairs { left: String, right: String, n: usize },
    #[error("model {model_id} has {eligible} complete case(s), fewer than k = {k}")]
    InsufficientCases {
        model_id: String,
        eligible: usize,
        k: usize,
    },
    #[error("k must be positive")]
    ZeroK,
}
