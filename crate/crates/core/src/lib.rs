//! Toolkit for building domain-specialised chat fine-tuning corpora from
//! consultation records and knowledge bases, and for evaluating tuned models
//! against matched human benchmarks.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`model`] holds the shared domain types and record normalisation.
//! * [`ingest`] reads and writes the line-delimited corpora.
//! * [`qa`] expands knowledge entries into question/answer pairs.
//! * [`judge`] mediates every external LLM call (scoring, grading, patient simulation).
//! * [`curation`] selects role-model records by soft-skill quantiles.
//! * [`sft`] exports chat-format training data plus a hyperparameter manifest.
//! * [`style`] computes conversational style features and alignment statistics.
//! * [`eval`] builds matched benchmarks, gap tables and win-rate breakdowns.
//! * [`knowledge`] measures knowledge retention across model stages.
//! * [`report`], [`config`] and [`pipeline`] wire it all up behind the CLI.

pub mod config;
pub mod converse;
pub mod curation;
pub mod eval;
pub mod ingest;
pub mod judge;
pub mod knowledge;
pub mod model;
pub mod pipeline;
pub mod qa;
pub mod report;
pub mod sft;
pub mod style;
pub mod synth;
pub mod util;

pub use model::{
    AspectKey, ConsultationRecord, Department, DoctorMeta, EvalScores, KnowledgeEntry,
    KnowledgeKind, QAPair, RecordSource, Role, SoftSkillScores, Turn,
};
