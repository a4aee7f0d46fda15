//! Knowledge-retention evaluation: sample Q&A items, collect a model stage's
//! answers, grade them through the judge and compare stages.

use std::collections::HashMap;
use std::io;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{ChatEndpoint, ChatMessage, JudgeError, JudgeGateway, Verdict};
use crate::model::{KnowledgeKind, QAPair};
use crate::util::{round_to, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub question: String,
    pub reference_answer: String,
    pub kind: KnowledgeKind,
}

impl From<&QAPair> for KnowledgeItem {
    fn from(p: &QAPair) -> Self {
        KnowledgeItem {
            question: p.question.clone(),
            reference_answer: p.answer.clone(),
            kind: p.kind,
        }
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("need {need} {kind} items, have {have}")]
    InsufficientPairs { kind: String, need: usize, have: usize },
    #[error("kind proportions must be non-negative and sum to 1, got {0}/{1}")]
    BadProportions(f64, f64),
    #[error("stage {stage} was evaluated on a different item set")]
    ItemSetMismatch { stage: String },
    #[error("need at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("answer source: {0}")]
    Answer(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindProportions {
    pub disease: f64,
    pub medicine: f64,
}

impl Default for KindProportions {
    fn default() -> Self {
        KindProportions {
            disease: 13029.0 / 20000.0,
            medicine: 6971.0 / 20000.0,
        }
    }
}

/// Stratified sample without replacement: `round(n * disease)` disease items
/// and the rest medicine. Asking for every pair returns all of them in input
/// order regardless of proportions.
pub fn sample_items(
    pairs: &[QAPair],
    n: usize,
    seed: u64,
    proportions: KindProportions,
) -> Result<Vec<KnowledgeItem>, KnowledgeError> {
    let KindProportions { disease, medicine } = proportions;
    if disease < 0.0 || medicine < 0.0 || (disease + medicine - 1.0).abs() > 1e-9 {
        return Err(KnowledgeError::BadProportions(disease, medicine));
    }
    if n > pairs.len() {
        return Err(KnowledgeError::InsufficientPairs { kind: "any".into(), need: n, have: pairs.len() });
    }
    if n == pairs.len() {
        return Ok(pairs.iter().map(KnowledgeItem::from).collect());
    }
    let n_disease = ((n as f64) * disease).round() as usize;
    let quota = [(KnowledgeKind::Disease, n_disease), (KnowledgeKind::Medicine, n - n_disease)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (kind, need) in quota {
        let stratum: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].kind == kind).collect();
        if stratum.len() < need {
            return Err(KnowledgeError::InsufficientPairs { kind: kind.to_string(), need, have: stratum.len() });
        }
        picked.extend(index::sample(&mut rng, stratum.len(), need).into_iter().map(|i| stratum[i]));
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| KnowledgeItem::from(&pairs[i])).collect())
}

/// Where a model stage's answers come from.
pub trait AnswerSource: Send + Sync {
    /// The stage's answer, or `None` when it has none for this question.
    fn answer(&self, item: &KnowledgeItem) -> Result<Option<String>, KnowledgeError>;
}

pub fn question_digest(question: &str) -> String {
    sha256_hex(question)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedAnswer {
    pub question_digest: String,
    pub answer: String,
}

/// Answers loaded from a `{question_digest, answer}` line file.
#[derive(Debug, Clone, Default)]
pub struct RecordedAnswers {
    by_digest: HashMap<String, String>,
}

impl RecordedAnswers {
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let lines: Vec<RecordedAnswer> = crate::util::read_jsonl(path)?;
        Ok(Self::from_lines(lines))
    }

    pub fn from_lines(lines: impl IntoIterator<Item = RecordedAnswer>) -> Self {
        RecordedAnswers {
            by_digest: lines.into_iter().map(|l| (l.question_digest, l.answer)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

impl AnswerSource for RecordedAnswers {
    fn answer(&self, item: &KnowledgeItem) -> Result<Option<String>, KnowledgeError> {
        Ok(self.by_digest.get(&question_digest(&item.question)).cloned())
    }
}

/// Answers with the reference text itself.
pub struct ReferenceAnswers;

impl AnswerSource for ReferenceAnswers {
    fn answer(&self, item: &KnowledgeItem) -> Result<Option<String>, KnowledgeError> {
        Ok(Some(item.reference_answer.clone()))
    }
}

/// Offline stand-in for a model stage: answers a hash-chosen `accuracy`
/// share of questions with the reference and the rest with a non-answer.
#[derive(Debug, Clone)]
pub struct MockAnswers {
    pub stage: String,
    pub accuracy: f64,
}

pub const NON_ANSWER: &str = "I am not sure about that.";

impl MockAnswers {
    fn knows(&self, question: &str) -> bool {
        let h = hex::decode(sha256_hex(format!("{}\u{1f}{question}", self.stage))).expect("hex digest");
        let u = u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) as f64 / (u64::MAX as f64 + 1.0);
        u < self.accuracy
    }
}

impl AnswerSource for MockAnswers {
    fn answer(&self, item: &KnowledgeItem) -> Result<Option<String>, KnowledgeError> {
        Ok(Some(if self.knows(&item.question) {
            item.reference_answer.clone()
        } else {
            NON_ANSWER.to_string()
        }))
    }
}

/// Answers from a live chat endpoint.
pub struct EndpointAnswers {
    pub endpoint: ChatEndpoint,
    pub system_prompt: String,
}

impl AnswerSource for EndpointAnswers {
    fn answer(&self, item: &KnowledgeItem) -> Result<Option<String>, KnowledgeError> {
        let mut messages = Vec::new();
        if !self.system_prompt.is_empty() {
            messages.push(ChatMessage::new("system", self.system_prompt.clone()));
        }
        messages.push(ChatMessage::new("user", item.question.clone()));
        let reply = self.endpoint.chat(&messages).map_err(|e| KnowledgeError::Answer(e.to_string()))?;
        Ok((!reply.trim().is_empty()).then_some(reply))
    }
}

/// Collect a source's answers into the recorded-answers form.
pub fn record_answers(items: &[KnowledgeItem], source: &dyn AnswerSource) -> Result<Vec<RecordedAnswer>, KnowledgeError> {
    let mut out = Vec::new();
    for item in items {
        if let Some(answer) = source.answer(item)? {
            out.push(RecordedAnswer { question_digest: question_digest(&item.question), answer });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Count {
    pub correct: usize,
    pub total: usize,
}

impl Count {
    /// Unrounded percentage correct.
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    /// Percentage correct to one decimal.
    pub fn percent(&self) -> f64 {
        accuracy_percent(self.correct, self.total)
    }
}

impl std::ops::Add for Count {
    type Output = Count;
    fn add(self, o: Count) -> Count {
        Count { correct: self.correct + o.correct, total: self.total + o.total }
    }
}

pub fn accuracy_percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    round_to(100.0 * correct as f64 / total as f64, 1)
}

/// Order-insensitive digest of an item set.
pub fn item_set_digest(items: &[KnowledgeItem]) -> String {
    let mut qs: Vec<String> = items.iter().map(|i| question_digest(&i.question)).collect();
    qs.sort();
    sha256_hex(qs.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub item_set: String,
    pub disease: Count,
    pub medicine: Count,
    /// Items with no answer, counted as incorrect.
    pub missing: usize,
}

impl StageRow {
    pub fn overall(&self) -> Count {
        self.disease + self.medicine
    }

    /// (overall, disease, medicine) percentages.
    pub fn percents(&self) -> [f64; 3] {
        [self.overall().percent(), self.disease.percent(), self.medicine.percent()]
    }
}

pub fn evaluate_stage(
    stage: &str,
    items: &[KnowledgeItem],
    source: &dyn AnswerSource,
    judge: &JudgeGateway,
) -> Result<StageRow, KnowledgeError> {
    let verdicts: Vec<Result<Option<Verdict>, KnowledgeError>> = judge.map(items, |item| {
        match source.answer(item)? {
            None => Ok(None),
            Some(a) if a.trim().is_empty() => Ok(None),
            Some(a) => Ok(Some(judge.grade_answer(&item.question, &item.reference_answer, &a)?)),
        }
    });
    let mut row = StageRow {
        stage: stage.to_string(),
        item_set: item_set_digest(items),
        disease: Count::default(),
        medicine: Count::default(),
        missing: 0,
    };
    for (item, v) in items.iter().zip(verdicts) {
        let slot = match item.kind {
            KnowledgeKind::Disease => &mut row.disease,
            KnowledgeKind::Medicine => &mut row.medicine,
        };
        slot.total += 1;
        match v? {
            Some(Verdict::Correct) => slot.correct += 1,
            Some(Verdict::Incorrect) => {}
            None => row.missing += 1,
        }
    }
    if row.missing > 0 {
        log::warn!("stage {stage}: {} item(s) had no answer and were counted incorrect", row.missing);
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<StageRow>,
    /// Point changes between adjacent stages for (overall, disease,
    /// medicine), taken from the one-decimal percentages.
    pub deltas: Vec<[f64; 3]>,
}

pub fn stage_delta(prev: &StageRow, next: &StageRow) -> [f64; 3] {
    let (a, b) = (prev.percents(), next.percents());
    std::array::from_fn(|i| round_to(b[i] - a[i], 1))
}

pub fn stage_comparison(rows: Vec<StageRow>) -> Result<AccuracyTable, KnowledgeError> {
    if rows.len() < 2 {
        return Err(KnowledgeError::TooFewStages(rows.len()));
    }
    if let Some(r) = rows.iter().find(|r| r.item_set != rows[0].item_set) {
        return Err(KnowledgeError::ItemSetMismatch { stage: r.stage.clone() });
    }
    let deltas = rows.windows(2).map(|w| stage_delta(&w[0], &w[1])).collect();
    Ok(AccuracyTable { rows, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AspectKey;
    use proptest::prelude::*;

    fn pairs(nd: usize, nm: usize) -> Vec<QAPair> {
        let mk = |i: usize, kind| QAPair {
            question: format!("q{i} {kind:?}"),
            answer: format!("answer number {i} with enough words"),
            kind,
            source_name: format!("e{i}"),
            aspect: if kind == KnowledgeKind::Disease { AspectKey::Symptoms } else { AspectKey::UsageDosage },
        };
        (0..nd).map(|i| mk(i, KnowledgeKind::Disease)).chain((0..nm).map(|i| mk(i, KnowledgeKind::Medicine))).collect()
    }

    fn row(stage: &str, d: (usize, usize), m: (usize, usize)) -> StageRow {
        StageRow {
            stage: stage.into(),
            item_set: "x".into(),
            disease: Count { correct: d.0, total: d.1 },
            medicine: Count { correct: m.0, total: m.1 },
            missing: 0,
        }
    }

    #[test]
    fn census_returns_everything() {
        let p = pairs(3, 9);
        let items = sample_items(&p, 12, 1, KindProportions::default()).unwrap();
        assert_eq!(items, p.iter().map(KnowledgeItem::from).collect::<Vec<_>>());
    }

    #[test]
    fn exact_proportions() {
        let p = pairs(100, 100);
        let items = sample_items(&p, 100, 7, KindProportions { disease: 0.65, medicine: 0.35 }).unwrap();
        assert_eq!(items.iter().filter(|i| i.kind == KnowledgeKind::Disease).count(), 65);
        assert_eq!(items.iter().filter(|i| i.kind == KnowledgeKind::Medicine).count(), 35);
        assert_eq!(items, sample_items(&p, 100, 7, KindProportions { disease: 0.65, medicine: 0.35 }).unwrap());
    }

    #[test]
    fn insufficient() {
        let p = pairs(10, 2);
        assert!(matches!(sample_items(&p, 13, 0, KindProportions::default()), Err(KnowledgeError::InsufficientPairs { .. })));
        let half = KindProportions { disease: 0.5, medicine: 0.5 };
        assert!(matches!(sample_items(&p, 8, 0, half), Err(KnowledgeError::InsufficientPairs { need: 4, have: 2, .. })));
    }

    #[test]
    fn printed_accuracies() {
        assert_eq!(accuracy_percent(19404, 20000), 97.0);
        assert_eq!(accuracy_percent(8223, 13029), 63.1);
        assert_eq!(accuracy_percent(3089, 6971), 44.3);
        assert_eq!(accuracy_percent(11312, 20000), 56.6);
        assert_eq!(accuracy_percent(17939, 20000), 89.7);
    }

    #[test]
    fn stage_deltas_from_rounded_percentages() {
        let rows = vec![
            row("base", (12727, 13029), (6677, 6971)),
            row("conv", (8223, 13029), (3089, 6971)),
            row("conv+qa", (11954, 13029), (5985, 6971)),
        ];
        let t = stage_comparison(rows).unwrap();
        assert_eq!(t.deltas[0][0], -40.4);
        assert_eq!(t.deltas[1][0], 33.1);
    }

    #[test]
    fn comparison_errors() {
        let a = row("a", (1, 2), (1, 2));
        let mut b = row("b", (1, 2), (1, 2));
        assert!(matches!(stage_comparison(vec![a.clone()]), Err(KnowledgeError::TooFewStages(1))));
        assert_eq!(stage_comparison(vec![a.clone(), a.clone()]).unwrap().deltas, vec![[0.0; 3]]);
        b.item_set = "y".into();
        assert!(matches!(stage_comparison(vec![a, b]), Err(KnowledgeError::ItemSetMismatch { .. })));
    }

    #[test]
    fn reference_answers_need_no_grading_calls() {
        let items: Vec<KnowledgeItem> = pairs(5, 5).iter().map(KnowledgeItem::from).collect();
        let judge = JudgeGateway::mock();
        let r = evaluate_stage("ref", &items, &ReferenceAnswers, &judge).unwrap();
        assert_eq!(r.overall(), Count { correct: 10, total: 10 });
        assert_eq!(r.percents(), [100.0; 3]);
        assert_eq!(judge.stats().upstream_calls, 0);
    }

    #[test]
    fn missing_answers_count_incorrect() {
        let items: Vec<KnowledgeItem> = pairs(2, 2).iter().map(KnowledgeItem::from).collect();
        let rec = RecordedAnswers::from_lines(record_answers(&items[..3], &ReferenceAnswers).unwrap());
        let r = evaluate_stage("partial", &items, &rec, &JudgeGateway::mock()).unwrap();
        assert_eq!((r.overall().correct, r.overall().total, r.missing), (3, 4, 1));
    }

    #[test]
    fn recorded_answers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<KnowledgeItem> = pairs(3, 3).iter().map(KnowledgeItem::from).collect();
        let lines = record_answers(&items, &MockAnswers { stage: "s".into(), accuracy: 0.5 }).unwrap();
        let path = dir.path().join("answers.jsonl");
        crate::util::write_jsonl(&path, &lines).unwrap();
        let loaded = RecordedAnswers::load(&path).unwrap();
        let judge = JudgeGateway::mock();
        let a = evaluate_stage("s", &items, &loaded, &judge).unwrap();
        let b = evaluate_stage("s", &items, &MockAnswers { stage: "s".into(), accuracy: 0.5 }, &judge).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mock_accuracy_is_roughly_honoured() {
        let items: Vec<KnowledgeItem> = pairs(600, 400).iter().map(KnowledgeItem::from).collect();
        let r = evaluate_stage("m", &items, &MockAnswers { stage: "m".into(), accuracy: 0.8 }, &JudgeGateway::mock()).unwrap();
        let pct = r.overall().percent();
        assert!((75.0..=85.0).contains(&pct), "{pct}");
    }

    proptest! {
        #[test]
        fn one_flip_moves_by_one_item(n in 2usize..40, wrong in prop::collection::btree_set(0usize..40, 1..10)) {
            let items: Vec<KnowledgeItem> = pairs(n, n).iter().map(KnowledgeItem::from).collect();
            let wrong: Vec<usize> = wrong.into_iter().filter(|&i| i < items.len()).collect();
            prop_assume!(!wrong.is_empty());
            let lines = |skip: &[usize]| -> Vec<RecordedAnswer> {
                items.iter().enumerate().map(|(i, it)| RecordedAnswer {
                    question_digest: question_digest(&it.question),
                    answer: if skip.contains(&i) { NON_ANSWER.into() } else { it.reference_answer.clone() },
                }).collect()
            };
            let judge = JudgeGateway::mock();
            let before = evaluate_stage("a", &items, &RecordedAnswers::from_lines(lines(&wrong)), &judge).unwrap();
            let after = evaluate_stage("a", &items, &RecordedAnswers::from_lines(lines(&wrong[1..])), &judge).unwrap();
            let total = items.len() as f64;
            prop_assert_eq!(after.overall().correct, before.overall().correct + 1);
            prop_assert!((after.overall().rate() - before.overall().rate() - 100.0 / total).abs() < 1e-9);
        }

        #[test]
        fn sample_is_stratified(nd in 0usize..60, nm in 0usize..60, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let p = pairs(nd, nm);
            let n = (p.len() as f64 * frac) as usize;
            let props = KindProportions { disease: 0.6, medicine: 0.4 };
            match sample_items(&p, n, seed, props) {
                Ok(items) => {
                    prop_assert_eq!(items.len(), n);
                    let d = items.iter().filter(|i| i.kind == KnowledgeKind::Disease).count();
                    if n < p.len() {
                        prop_assert!((d as f64 - 0.6 * n as f64).abs() <= 1.0);
                    }
                    let uniq: std::collections::HashSet<_> = items.iter().collect();
                    prop_assert_eq!(uniq.len(), n);
                }
                Err(KnowledgeError::InsufficientPairs { need, have, .. }) => prop_assert!(need > have),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
