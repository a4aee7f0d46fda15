use serde::{Deserialize, Serialize};

use super::features::{alignment_distance, pair_distance, Feature, NgramMode, StyleError};
use super::ttest::{paired_ttest, TTest};
use crate::model::ConsultationRecord;

/// Conversations produced by one model stage, aligned by index with the human
/// seed records.
#[derive(Debug, Clone)]
pub struct StageRun {
    pub name: String,
    pub conversations: Vec<ConsultationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub feature: Feature,
    /// Mean distance to the human conversations, one per stage.
    pub distances: Vec<f64>,
    /// Paired test between consecutive stages; `mean_diff` is how much the
    /// distance shrank from stage k to stage k + 1.
    pub transitions: Vec<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub stages: Vec<String>,
    pub n: usize,
    pub mode: NgramMode,
    pub rows: Vec<AlignmentRow>,
}

impl AlignmentTable {
    pub fn row(&self, feature: Feature) -> &AlignmentRow {
        &self.rows[feature.index()]
    }
}

/// Per-pair deviations of one stage's conversations from their seeds.
pub fn stage_deviations(
    humans: &[ConsultationRecord],
    stage: &StageRun,
    mode: NgramMode,
) -> Result<Vec<[f64; 7]>, StyleError> {
    if stage.conversations.len() != humans.len() {
        return Err(StyleError::StageSizeMismatch {
            stage: stage.name.clone(),
            got: stage.conversations.len(),
            expected: humans.len(),
        });
    }
    stage
        .conversations
        .iter()
        .zip(humans)
        .map(|(m, h)| pair_distance(m, h, mode))
        .collect()
}

pub fn alignment_table(
    humans: &[ConsultationRecord],
    stages: &[StageRun],
    mode: NgramMode,
) -> Result<AlignmentTable, StyleError> {
    if humans.len() < 2 {
        return Err(StyleError::TooFewPairs(humans.len()));
    }
    let devs: Vec<Vec<[f64; 7]>> = stages
        .iter()
        .map(|s| stage_deviations(humans, s, mode))
        .collect::<Result<_, _>>()?;
    let means: Vec<[f64; 7]> = devs.iter().map(|d| alignment_distance(d)).collect::<Result<_, _>>()?;
    let column = |k: usize, f: usize| -> Vec<f64> { devs[k].iter().map(|d| d[f]).collect() };
    let mut rows = Vec::with_capacity(7);
    for feature in Feature::ALL {
        let f = feature.index();
        let transitions = (1..stages.len())
            .map(|k| paired_ttest(&column(k - 1, f), &column(k, f)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(AlignmentRow {
            feature,
            distances: means.iter().map(|m| m[f]).collect(),
            transitions,
        });
    }
    Ok(AlignmentTable {
        stages: stages.iter().map(|s| s.name.clone()).collect(),
        n: humans.len(),
        mode,
        rows,
    })
}
