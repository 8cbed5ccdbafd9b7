//! Question answering over building models: IFC ingestion, per-class tables,
//! table QA, intent routing, LLM backends, loss functions and evaluation.

pub mod class;
pub mod eval;
pub mod ifc;
pub mod intent;
pub mod llm;
pub mod pipeline;
pub mod qa;
pub mod scalar;
pub mod scoring;
pub mod table;

pub use class::ElementClass;
pub use scalar::{ExactSum, Scalar};

pub type ExactSumF64 = ExactSum<f64>;
pub type ExactSumF32 = ExactSum<f32>;
pub type SelectionPredictionF64 = scoring::SelectionPrediction<f64>;
pub type SelectionPredictionF32 = scoring::SelectionPrediction<f32>;
pub type AggregationPredictionF64 = scoring::AggregationPrediction<f64>;
pub type AggregationPredictionF32 = scoring::AggregationPrediction<f32>;
