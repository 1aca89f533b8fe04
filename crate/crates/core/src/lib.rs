//! Hormone-cycle simulation, conditioned prompt generation, linguistic
//! analysis, and LLM benchmarking under circadian and menstrual framings.

pub mod bench;
pub mod dataset;
pub mod gateway;
pub mod lexi;
pub mod prompt;
pub mod report;
pub mod rhythm;
pub mod stats;

pub use bench::{BenchContext, BenchResult, RunPlan, RunSummary, Scorer};
pub use dataset::{BenchItem, DatasetKind, Gold};
pub use gateway::{ChatProvider, Completion, GatewayError, ProviderConfig};
pub use lexi::{EmotionLexicon, EmotionVector, LexiReport, ValenceLexicon};
pub use prompt::{Condition, PromptRecord, ToneBand};
pub use report::{AggregateCell, Comparison, Grouping};
pub use rhythm::{CycleKind, CycleParams, CyclePhase, CyclePoint, HormoneState, Signal};
pub use stats::{StatError, TestKind, TestResult};
