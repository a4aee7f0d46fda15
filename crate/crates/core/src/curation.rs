//! Role-model record selection by per-skill quantile thresholds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ScoredRecord, SoftSkillScores};

#[derive(Debug, Error, PartialEq)]
pub enum CurationError {
    #[error("cannot select from an empty corpus")]
    EmptyCorpus,
    #[error("quantile {0} is outside (0, 1]")]
    InvalidQuantile(f64),
    #[error("record {0} has no soft-skill scores")]
    MissingScores(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Keep a record only if every skill clears its own threshold.
    #[default]
    AllDims,
    /// Keep a record if its mean skill clears the threshold of the mean distribution.
    MeanDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionPolicy {
    pub quantile: f64,
    pub combine: Combine,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            quantile: 0.5,
            combine: Combine::AllDims,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), CurationError> {
        if self.quantile > 0.0 && self.quantile <= 1.0 {
            Ok(())
        } else {
            Err(CurationError::InvalidQuantile(self.quantile))
        }
    }
}

/// 0-based index of the nearest-rank quantile: rank `ceil(q*n)` clamped to
/// [1, n]. A small tolerance keeps products such as 0.7*10 from rounding up a
/// whole rank.
pub fn nearest_rank_index(n: usize, quantile: f64) -> usize {
    let rank = (quantile * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

fn quantile_value(values: &mut [f64], quantile: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[nearest_rank_index(values.len(), quantile)]
}

/// Per-skill nearest-rank thresholds.
pub fn thresholds(scores: &[SoftSkillScores], quantile: f64) -> Result<[f64; 3], CurationError> {
    if scores.is_empty() {
        return Err(CurationError::EmptyCorpus);
    }
    SelectionPolicy {
        quantile,
        combine: Combine::AllDims,
    }
    .validate()?;
    let mut out = [0.0; 3];
    for (dim, slot) in out.iter_mut().enumerate() {
        let mut col: Vec<f64> = scores.iter().map(|s| s.as_array()[dim]).collect();
        *slot = quantile_value(&mut col, quantile);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub policy: SelectionPolicy,
    /// Per-skill thresholds under `all_dims`; the mean-score threshold
    /// repeated three times under `mean_dim`.
    pub thresholds: [f64; 3],
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
}

impl SelectionSummary {
    pub fn retention(&self) -> f64 {
        if self.input == 0 {
            0.0
        } else {
            self.kept as f64 / self.input as f64
        }
    }
}

/// Keep mask over `scores` under `policy`. Ties at a threshold are kept.
pub fn select_mask(scores: &[SoftSkillScores], policy: &SelectionPolicy) -> Result<(Vec<bool>, [f64; 3]), CurationError> {
    policy.validate()?;
    if scores.is_empty() {
        return Err(CurationError::EmptyCorpus);
    }
    match policy.combine {
        Combine::AllDims => {
            let t = thresholds(scores, policy.quantile)?;
            let mask = scores
                .iter()
                .map(|s| s.as_array().iter().zip(&t).all(|(v, th)| v >= th))
                .collect();
            Ok((mask, t))
        }
        Combine::MeanDim => {
            let means: Vec<f64> = scores.iter().map(SoftSkillScores::mean).collect();
            let th = quantile_value(&mut means.clone(), policy.quantile);
            Ok((means.iter().map(|m| *m >= th).collect(), [th; 3]))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub kept: Vec<ScoredRecord>,
    pub dropped: Vec<ScoredRecord>,
    pub summary: SelectionSummary,
}

/// Partition scored records into kept and dropped, preserving input order.
pub fn select(records: Vec<ScoredRecord>, policy: &SelectionPolicy) -> Result<Selection, CurationError> {
    let scores = records
        .iter()
        .map(|r| r.soft_skills.ok_or_else(|| CurationError::MissingScores(r.record.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let (mask, thresholds) = select_mask(&scores, policy)?;
    let input = records.len();
    let (kept, dropped): (Vec<_>, Vec<_>) = records
        .into_iter()
        .zip(mask)
        .partition(|(_, keep)| *keep);
    let kept: Vec<ScoredRecord> = kept.into_iter().map(|(r, _)| r).collect();
    let dropped: Vec<ScoredRecord> = dropped.into_iter().map(|(r, _)| r).collect();
    Ok(Selection {
        summary: SelectionSummary {
            policy: *policy,
            thresholds,
            input,
            kept: kept.len(),
            dropped: dropped.len(),
        },
        kept,
        dropped,
    })
}

pub const BIN_WIDTH: f64 = 5.0;
pub const BIN_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin i covers [5i, 5i+5); the last bin also holds 100.
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: Option<f64>,
}

impl Histogram {
    pub fn of(values: &[f64]) -> Self {
        let mut counts = vec![0; BIN_COUNT];
        for v in values {
            let bin = ((v / BIN_WIDTH).floor().max(0.0) as usize).min(BIN_COUNT - 1);
            counts[bin] += 1;
        }
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        Histogram {
            counts,
            n: values.len(),
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDistribution {
    pub skill: String,
    pub before: Histogram,
    pub after: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub skills: Vec<SkillDistribution>,
}

pub fn distribution_report(before: &[SoftSkillScores], after: &[SoftSkillScores]) -> DistributionReport {
    let skills = SoftSkillScores::FIELDS
        .iter()
        .enumerate()
        .map(|(dim, name)| {
            let col = |s: &[SoftSkillScores]| s.iter().map(|x| x.as_array()[dim]).collect::<Vec<_>>();
            SkillDistribution {
                skill: name.to_string(),
                before: Histogram::of(&col(before)),
                after: Histogram::of(&col(after)),
            }
        })
        .collect();
    DistributionReport { skills }
}
