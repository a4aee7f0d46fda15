use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::tokenize;
use crate::model::{ConsultationRecord, Role};

/// The seven conversational style features, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Rounds,
    WordsPerRound,
    QuestionRatio,
    QuestionPattern,
    DistinctBigrams,
    DistinctTrigrams,
    TypeTokenRatio,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Rounds,
        Feature::WordsPerRound,
        Feature::QuestionRatio,
        Feature::QuestionPattern,
        Feature::DistinctBigrams,
        Feature::DistinctTrigrams,
        Feature::TypeTokenRatio,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Feature::Rounds => "#rounds",
            Feature::WordsPerRound => "#word per round",
            Feature::QuestionRatio => "question ratio",
            Feature::QuestionPattern => "question sequential pattern",
            Feature::DistinctBigrams => "bigram ratio",
            Feature::DistinctTrigrams => "trigram ratio",
            Feature::TypeTokenRatio => "type-token ratio",
        }
    }

    pub fn index(self) -> usize {
        Feature::ALL.iter().position(|f| *f == self).expect("feature in ALL")
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How the n-gram features are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramMode {
    /// Number of distinct n-grams in the conversation.
    #[default]
    Count,
    /// Distinct n-grams per 1000 doctor tokens.
    PerThousandTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFeatureVector {
    pub rounds: usize,
    pub words_per_round: f64,
    pub question_ratio: f64,
    pub question_pattern: Vec<bool>,
    pub distinct_bigrams: f64,
    pub distinct_trigrams: f64,
    pub type_token_ratio: f64,
}

const TERMINATORS: [char; 6] = ['。', '！', '？', '.', '!', '?'];

fn is_question_mark(c: char) -> bool {
    c == '?' || c == '？'
}

/// (sentences, questions) in one turn. A sentence is a stretch with at least
/// one non-space, non-terminator character, closed by a run of terminators
/// or the end of the turn; it is a question when its closing run holds `?`
/// or `？`.
pub fn count_sentences(text: &str) -> (usize, usize) {
    let mut sentences = 0;
    let mut questions = 0;
    let mut has_content = false;
    let mut in_run = false;
    let mut run_has_q = false;
    let mut close = |has_content: &mut bool, run_has_q: bool| {
        if *has_content {
            sentences += 1;
            if run_has_q {
                questions += 1;
            }
        }
        *has_content = false;
    };
    for c in text.chars() {
        if TERMINATORS.contains(&c) {
            in_run = true;
            run_has_q |= is_question_mark(c);
        } else {
            if in_run {
                close(&mut has_content, run_has_q);
                in_run = false;
                run_has_q = false;
            }
            if !c.is_whitespace() {
                has_content = true;
            }
        }
    }
    close(&mut has_content, in_run && run_has_q);
    (sentences, questions)
}

/// Style features over the doctor side of a normalized record.
pub fn extract_features(record: &ConsultationRecord, mode: NgramMode) -> StyleFeatureVector {
    let doctor: Vec<&str> = record
        .turns
        .iter()
        .filter(|t| t.role == Role::Doctor)
        .map(|t| t.text.as_str())
        .collect();
    let rounds = doctor.len();
    let mut total_tokens = 0usize;
    let mut types: HashSet<String> = HashSet::new();
    let mut bigrams: HashSet<(String, String)> = HashSet::new();
    let mut trigrams: HashSet<(String, String, String)> = HashSet::new();
    let mut sentences = 0usize;
    let mut questions = 0usize;
    let mut pattern = Vec::with_capacity(rounds);
    for text in &doctor {
        let toks = tokenize(text);
        total_tokens += toks.len();
        for w in toks.windows(2) {
            bigrams.insert((w[0].clone(), w[1].clone()));
        }
        for w in toks.windows(3) {
            trigrams.insert((w[0].clone(), w[1].clone(), w[2].clone()));
        }
        types.extend(toks);
        let (s, q) = count_sentences(text);
        sentences += s;
        questions += q;
        pattern.push(text.chars().any(is_question_mark));
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let ngram = |distinct: usize| match mode {
        NgramMode::Count => distinct as f64,
        NgramMode::PerThousandTokens => 1000.0 * ratio(distinct, total_tokens),
    };
    StyleFeatureVector {
        rounds,
        words_per_round: ratio(total_tokens, rounds),
        question_ratio: ratio(questions, sentences),
        question_pattern: pattern,
        distinct_bigrams: ngram(bigrams.len()),
        distinct_trigrams: ngram(trigrams.len()),
        type_token_ratio: ratio(types.len(), total_tokens),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StyleError {
    #[error("model record {model} was not seeded from human record {human}")]
    SeedMismatch { model: String, human: String },
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("stage {stage} has {got} conversations, expected {expected}")]
    StageSizeMismatch { stage: String, got: usize, expected: usize },
}

/// Fraction of mismatched positions over the common prefix of two binary
/// sequences; 0 when either is empty.
pub fn pattern_mismatch(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / n as f64
}

/// Absolute per-feature deviation between two feature vectors, in
/// [`Feature::ALL`] order.
pub fn feature_deviation(model: &StyleFeatureVector, human: &StyleFeatureVector) -> [f64; 7] {
    [
        (model.rounds as f64 - human.rounds as f64).abs(),
        (model.words_per_round - human.words_per_round).abs(),
        (model.question_ratio - human.question_ratio).abs(),
        pattern_mismatch(&model.question_pattern, &human.question_pattern),
        (model.distinct_bigrams - human.distinct_bigrams).abs(),
        (model.distinct_trigrams - human.distinct_trigrams).abs(),
        (model.type_token_ratio - human.type_token_ratio).abs(),
    ]
}

/// Per-feature deviation of a generated conversation from the human record
/// it was seeded from. Seeding is checked by the shared opening patient turn.
pub fn pair_distance(
    model: &ConsultationRecord,
    human: &ConsultationRecord,
    mode: NgramMode,
) -> Result<[f64; 7], StyleError> {
    let opening = |r: &ConsultationRecord| r.first_patient_turn().map(|t| t.text.clone());
    if opening(model).is_none() || opening(model) != opening(human) {
        return Err(StyleError::SeedMismatch {
            model: model.id.clone(),
            human: human.id.clone(),
        });
    }
    Ok(feature_deviation(
        &extract_features(model, mode),
        &extract_features(human, mode),
    ))
}

/// Mean of per-pair deviations for each feature.
pub fn alignment_distance(deviations: &[[f64; 7]]) -> Result<[f64; 7], StyleError> {
    if deviations.len() < 2 {
        return Err(StyleError::TooFewPairs(deviations.len()));
    }
    let mut sum = [0.0; 7];
    for d in deviations {
        for (s, v) in sum.iter_mut().zip(d) {
            *s += v;
        }
    }
    Ok(sum.map(|s| s / deviations.len() as f64))
}
