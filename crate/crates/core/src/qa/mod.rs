//! Deterministic table question answering.

mod exec;
mod matching;
mod partition;
mod plan;
mod planner;

pub use exec::{execute, format_float, select, Answer, Selection};
pub use matching::{match_answers, match_denotation, texts_match, DEFAULT_FLOAT_TOL};
pub use partition::{
    execute_partitioned, segment_count, ExecutorBackend, SegmentAnswerer, SegmentResult,
};
pub use plan::{AggregationOp, Comparator, Direction, Filter, Literal, OrderBy, QueryPlan};
pub use planner::{aggregation_hint, derive_plan};

use crate::class::ElementClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QaError {
    #[error("column {0:?} not found")]
    ColumnNotFound(String),
    #[error("column {0:?} is not numeric")]
    TypeMismatch(String),
    #[error("plan targets {plan} but the table is {table}")]
    LabelMismatch {
        plan: ElementClass,
        table: ElementClass,
    },
    #[error("plan projects no columns")]
    EmptyProjection,
    #[error("order_by limit must be at least 1")]
    InvalidLimit,
    #[error("segment size must be at least 1")]
    InvalidSegmentSize,
    #[error("average over an empty selection")]
    EmptyAverage,
    #[error("cannot plan the question: {0}")]
    NoPlan(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<QaError>,
    },
}
