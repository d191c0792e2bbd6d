//! Automated paper reviewing around hosted language models: corpus
//! ingestion, instruction datasets, review standardization and generation,
//! format validation, review/paper mismatch scoring, and evaluation metrics.

pub mod corpus;
pub mod format_contract;
pub mod io;
pub mod llm_gateway;
pub mod metrics;
pub mod mismatch;
pub mod parallel;
pub mod prompt_kit;
pub mod reviewer;
pub mod standardizer;
pub mod text;

pub use corpus::{Decision, PaperRecord, RawReview, ReviewSection};
pub use format_contract::{FormatReport, ScoreAspect, ScoreSlots, Section, StructuredReview};
pub use llm_gateway::{EmbeddingVector, EndpointProfile, Gateway, GenerationConfig};
pub use metrics::TextScore;
pub use mismatch::{MismatchModel, MismatchSample, TrainConfig};
pub use prompt_kit::{PromptKit, SftTriplet};
pub use reviewer::{GeneratedReview, GenerationError, ReviewGenerator, Reviewer};
pub use standardizer::Standardizer;
