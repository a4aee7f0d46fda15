use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::sampling::MatchedPair;
use super::EvalError;
use crate::model::{
    AgeBand, CityTier, ConsultsBand, Department, DoctorMeta, EvalScores, ExperienceBand, Gender,
    HospitalPrestige, ScoredRecord, Title,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Professionalism,
    Accuracy,
    Satisfaction,
    Trustworthiness,
    Overall,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Professionalism,
        Metric::Accuracy,
        Metric::Satisfaction,
        Metric::Trustworthiness,
        Metric::Overall,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Professionalism => "Professionalism",
            Metric::Accuracy => "Accuracy",
            Metric::Satisfaction => "Satisfaction",
            Metric::Trustworthiness => "Trustworthiness",
            Metric::Overall => "Overall Score",
        }
    }

    pub fn value(self, s: &EvalScores) -> f64 {
        match self {
            Metric::Professionalism => s.professionalism,
            Metric::Accuracy => s.accuracy,
            Metric::Satisfaction => s.satisfaction,
            Metric::Trustworthiness => s.trustworthiness,
            Metric::Overall => s.overall(),
        }
    }
}

/// A matched pair with both sides' evaluation scores and the human doctor's
/// profile, if known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: MatchedPair,
    pub model: EvalScores,
    pub human: EvalScores,
    pub human_meta: Option<DoctorMeta>,
}

impl ScoredPair {
    pub fn reversed(&self) -> ScoredPair {
        ScoredPair { model: self.human, human: self.model, ..self.clone() }
    }
}

/// Attach scores to matched pairs; both records must carry evaluation scores.
pub fn score_pairs(
    pairs: &[MatchedPair],
    model: &[ScoredRecord],
    humans: &[ScoredRecord],
) -> Result<Vec<ScoredPair>, EvalError> {
    let m = super::sampling::index_by_id(model);
    let h = super::sampling::index_by_id(humans);
    let scores = |map: &BTreeMap<&str, &ScoredRecord>, id: &str| -> Result<(EvalScores, Option<DoctorMeta>), EvalError> {
        let r = map.get(id).ok_or_else(|| EvalError::MissingScores(id.to_string()))?;
        let s = r.eval_scores.ok_or_else(|| EvalError::MissingScores(id.to_string()))?;
        Ok((s, r.record.doctor_meta.clone()))
    };
    pairs
        .iter()
        .map(|p| {
            let (ms, _) = scores(&m, &p.model_record_id)?;
            let (hs, meta) = scores(&h, &p.human_record_id)?;
            Ok(ScoredPair { pair: p.clone(), model: ms, human: hs, human_meta: meta })
        })
        .collect()
}

/// Count of pairs where the model scored at least as high as the human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinRate {
    pub wins: usize,
    pub total: usize,
}

impl WinRate {
    pub fn percent(&self) -> f64 {
        100.0 * self.wins as f64 / self.total as f64
    }
}

impl fmt::Display for WinRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}%", self.percent())
    }
}

/// Ties count as wins.
pub fn win_rate(pairs: &[ScoredPair], metric: Metric) -> Result<WinRate, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let wins = pairs
        .iter()
        .filter(|p| metric.value(&p.model) >= metric.value(&p.human))
        .count();
    Ok(WinRate { wins, total: pairs.len() })
}

/// Share of pairs the model strictly lost; the complement of [`win_rate`].
pub fn loss_rate(pairs: &[ScoredPair], metric: Metric) -> Result<WinRate, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let losses = pairs
        .iter()
        .filter(|p| metric.value(&p.human) > metric.value(&p.model))
        .count();
    Ok(WinRate { wins: losses, total: pairs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    Department,
    HospitalPrestige,
    ExperienceBand,
    ConversationLengthBand,
    CityTier,
    Gender,
    ConsultsBand,
    AgeBand,
    Title,
}

impl Segmentation {
    pub const ALL: [Segmentation; 9] = [
        Segmentation::Department,
        Segmentation::HospitalPrestige,
        Segmentation::ExperienceBand,
        Segmentation::ConversationLengthBand,
        Segmentation::CityTier,
        Segmentation::Gender,
        Segmentation::ConsultsBand,
        Segmentation::AgeBand,
        Segmentation::Title,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Segmentation::Department => "Outpatient Department",
            Segmentation::HospitalPrestige => "Hospital Prestige",
            Segmentation::ExperienceBand => "Work Experience",
            Segmentation::ConversationLengthBand => "Conversation Length",
            Segmentation::CityTier => "Hospital City",
            Segmentation::Gender => "Gender",
            Segmentation::ConsultsBand => "Times Consulted",
            Segmentation::AgeBand => "Age",
            Segmentation::Title => "Professional Title",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Segmentation::Department => "department",
            Segmentation::HospitalPrestige => "hospital_prestige",
            Segmentation::ExperienceBand => "experience_band",
            Segmentation::ConversationLengthBand => "conversation_length_band",
            Segmentation::CityTier => "city_tier",
            Segmentation::Gender => "gender",
            Segmentation::ConsultsBand => "consults_band",
            Segmentation::AgeBand => "age_band",
            Segmentation::Title => "title",
        }
    }

    /// Every segment label in display order.
    pub fn segments(self) -> Vec<&'static str> {
        match self {
            Segmentation::Department => Department::CLASSIFIED.iter().map(|d| d.display_name()).collect(),
            Segmentation::HospitalPrestige => vec!["Top-tier", "Well-known", "Ordinary"],
            Segmentation::ExperienceBand => vec!["0-9", "10-19", "20+"],
            Segmentation::ConversationLengthBand => vec!["2-6", "8-10", "12+"],
            Segmentation::CityTier => vec!["Tier 1", "Tier 2", "Tier 3"],
            Segmentation::Gender => vec!["Female", "Male"],
            Segmentation::ConsultsBand => vec!["<1000", "1000-5000", "5000-10000", "10000+"],
            Segmentation::AgeBand => vec!["<30", "30-40", "40-50", "50+"],
            Segmentation::Title => vec!["Junior", "Attending", "Associate", "Chief"],
        }
    }

    /// Segment label of a pair, or `None` when the needed metadata is unknown.
    pub fn segment_of(self, p: &ScoredPair) -> Option<&'static str> {
        let meta = p.human_meta.as_ref();
        match self {
            Segmentation::Department => match p.pair.department {
                Department::Unclassified => None,
                d => Some(d.display_name()),
            },
            Segmentation::ConversationLengthBand => Some(p.pair.length_band.label()),
            Segmentation::HospitalPrestige => meta.map(|m| match m.hospital_prestige {
                HospitalPrestige::TopTier => "Top-tier",
                HospitalPrestige::WellKnown => "Well-known",
                HospitalPrestige::Ordinary => "Ordinary",
            }),
            Segmentation::ExperienceBand => meta.map(|m| ExperienceBand::of(m.experience_years).label()),
            Segmentation::CityTier => meta.map(|m| match m.hospital_city_tier {
                CityTier::Tier1 => "Tier 1",
                CityTier::Tier2 => "Tier 2",
                CityTier::Tier3 => "Tier 3",
            }),
            Segmentation::Gender => meta.and_then(|m| match m.gender {
                Gender::Female => Some("Female"),
                Gender::Male => Some("Male"),
                Gender::Unknown => None,
            }),
            Segmentation::ConsultsBand => meta.map(|m| ConsultsBand::of(m.times_consulted).label()),
            Segmentation::AgeBand => meta.and_then(|m| m.age.map(|a| AgeBand::of(a).label())),
            Segmentation::Title => meta.and_then(|m| match m.title {
                Title::Junior => Some("Junior"),
                Title::Attending => Some("Attending"),
                Title::Associate => Some("Associate"),
                Title::Chief => Some("Chief"),
                Title::Unknown => None,
            }),
        }
    }

    pub fn parse(s: &str) -> Option<Segmentation> {
        Segmentation::ALL.into_iter().find(|x| x.key() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub segment: String,
    pub n: usize,
    /// One entry per [`Metric::ALL`].
    pub rates: Vec<WinRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTable {
    pub segmentation: Segmentation,
    pub rows: Vec<SegmentRow>,
    /// Segments with no pairs, omitted from `rows`.
    pub omitted: Vec<String>,
    /// Pairs whose metadata did not determine a segment.
    pub unassigned: usize,
    pub total: usize,
}

pub fn segment_win_rates(pairs: &[ScoredPair], segmentation: Segmentation) -> SegmentTable {
    let mut buckets: BTreeMap<&str, Vec<ScoredPair>> = BTreeMap::new();
    let mut unassigned = 0;
    for p in pairs {
        match segmentation.segment_of(p) {
            Some(s) => buckets.entry(s).or_default().push(p.clone()),
            None => unassigned += 1,
        }
    }
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for seg in segmentation.segments() {
        match buckets.get(seg) {
            Some(members) => rows.push(SegmentRow {
                segment: seg.to_string(),
                n: members.len(),
                rates: Metric::ALL
                    .iter()
                    .map(|&m| win_rate(members, m).expect("bucket is non-empty"))
                    .collect(),
            }),
            None => omitted.push(seg.to_string()),
        }
    }
    SegmentTable { segmentation, rows, omitted, unassigned, total: pairs.len() }
}
