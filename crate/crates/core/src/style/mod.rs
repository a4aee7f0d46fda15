//! Conversational style features and alignment between model and human
//! doctors.

mod alignment;
mod features;
mod tokenize;
mod ttest;

pub use alignment::{alignment_table, stage_deviations, AlignmentRow, AlignmentTable, StageRun};
pub use features::{
    alignment_distance, count_sentences, extract_features, feature_deviation, pair_distance,
    pattern_mismatch, Feature, NgramMode, StyleError, StyleFeatureVector,
};
pub use tokenize::{is_cjk, tokenize};
pub use ttest::{inc_beta, ln_gamma, paired_ttest, significance_stars, t_two_sided_p, TTest};
