//! Matched human benchmarks, gap tables and win-rate breakdowns.

mod gap;
mod sampling;
mod winrate;

use thiserror::Error;

use crate::model::Department;

pub use gap::{gap_percent, gap_table, gap_table_from_means, row_means, GapReport, GapRow, GapSample, RowMeans};
pub use sampling::{index_by_id, match_pairs, matched_sample, matched_sample_indices, BenchmarkSample, MatchedPair};
pub use winrate::{
    loss_rate, score_pairs, segment_win_rates, win_rate, Metric, ScoredPair, SegmentRow, SegmentTable,
    Segmentation, WinRate,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("pool has {have} {department} records, need {need}")]
    InsufficientPool { department: Department, need: usize, have: usize },
    #[error("pool has {have} {department} records in length band {band}, need {need}")]
    InsufficientBucket { department: Department, band: String, need: usize, have: usize },
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("no pairs")]
    EmptyPairs,
    #[error("record {0} has no evaluation scores")]
    MissingScores(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("human mean is zero; gap undefined")]
    ZeroBaseline,
}
