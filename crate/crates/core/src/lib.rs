//! Information-consistency scoring of summaries with multiple-choice
//! questions.
//!
//! Questions are generated from one text, answered against both the source
//! and the summary, and the distances between the two option distributions
//! are averaged into a score (1 = consistent). The [`harness`] module
//! measures how well such scores track human judgements.

pub mod backend;
pub mod distributions;
pub mod harness;
mod par;
pub mod scoring;
pub mod textmetrics;

pub use backend::{Backend, BackendDescriptor, BackendError, BackendKind, MCQuestion, MockBackend, RemoteBackend};
pub use distributions::{distance, effective_options, DistanceKind, OptionDistribution};
pub use harness::{CorrelationResult, EvalDataset, EvalRecord, Level};
pub use par::parallel_map;
pub use scoring::{score_pair, ScoreConfig, ScoreReport, Variant};
