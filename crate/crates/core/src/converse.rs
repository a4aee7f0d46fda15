//! Candidate-model conversations driven by the judge's patient simulation.

use thiserror::Error;

use crate::judge::{ChatEndpoint, ChatMessage, JudgeError, JudgeGateway, PatientTurn};
use crate::model::{ConsultationRecord, RecordSource, Role, Turn};
use crate::style::{alignment_table, AlignmentTable, NgramMode, StageRun, StyleError};
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum ConverseError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Style(#[from] StyleError),
    #[error("model endpoint: {0}")]
    Endpoint(String),
    #[error("seed record {0} has no patient turn")]
    NoOpening(String),
    #[error("stage {stage} gave an empty reply on {record}")]
    EmptyReply { stage: String, record: String },
}

/// The doctor side of a simulated consultation.
pub trait ModelConverser: Send + Sync {
    fn name(&self) -> &str;

    /// Next doctor message given the conversation so far (which ends with a
    /// patient turn), or `None` to end the consultation. `seed` is the human
    /// record the simulation is grounded in.
    fn reply(&self, seed: &ConsultationRecord, conversation: &[Turn]) -> Result<Option<String>, ConverseError>;
}

fn doctor_turns_so_far(conversation: &[Turn]) -> usize {
    conversation.iter().filter(|t| t.role == Role::Doctor).count()
}

/// Replays the human doctor's turns. Driving it against the mock patient
/// reproduces the seed conversation.
pub struct HumanEcho;

impl ModelConverser for HumanEcho {
    fn name(&self) -> &str {
        "human"
    }

    fn reply(&self, seed: &ConsultationRecord, conversation: &[Turn]) -> Result<Option<String>, ConverseError> {
        Ok(seed.doctor_turns().nth(doctor_turns_so_far(conversation)).map(|t| t.text.clone()))
    }
}

const OPENERS: [&str; 6] = [
    "Thank you for your detailed description.",
    "Hello, I understand your concern.",
    "Based on what you have described, there are several possibilities.",
    "This situation is quite common and usually not serious.",
    "您好，根据您的描述，可能有多种原因。",
    "I'm sorry to hear you are not feeling well.",
];

const BODIES: [&str; 8] = [
    "It is recommended that you rest well, drink plenty of water and keep a light diet.",
    "Common causes include infection, allergy, fatigue and changes in the weather.",
    "You may consider taking over-the-counter medication according to the instructions.",
    "If the symptoms persist or worsen, please go to a hospital for further examination.",
    "Regular exercise and a balanced routine will help your recovery.",
    "建议您注意休息，多喝水，饮食清淡。",
    "A blood test or imaging examination may be needed to confirm the diagnosis.",
    "Please avoid spicy food, alcohol and staying up late.",
];

const QUESTIONS: [&str; 5] = [
    "How long have you had these symptoms?",
    "Do you have any other discomfort?",
    "Have you taken any medicine so far?",
    "请问还有其他不舒服吗？",
    "Is there any history of allergies?",
];

/// Deterministic offline model stage. With probability `fidelity` (decided
/// per turn by hashing) it answers with the human doctor's corresponding
/// turn; otherwise it produces a generic reply of `verbosity` body sentences.
#[derive(Debug, Clone)]
pub struct MockStage {
    pub name: String,
    pub fidelity: f64,
    pub verbosity: usize,
}

impl MockStage {
    pub fn new(name: impl Into<String>, fidelity: f64, verbosity: usize) -> Self {
        MockStage { name: name.into(), fidelity, verbosity }
    }

    fn digest(&self, record_id: &str, turn: usize) -> Vec<u8> {
        hex::decode(sha256_hex(format!("{}\u{1f}{record_id}\u{1f}{turn}", self.name))).expect("hex digest")
    }

    fn synthetic(&self, h: &[u8]) -> String {
        let mut parts = vec![OPENERS[h[1] as usize % OPENERS.len()]];
        for i in 0..self.verbosity {
            parts.push(BODIES[h[2 + i % 20] as usize % BODIES.len()]);
        }
        if h[23] % 2 == 0 {
            parts.push(QUESTIONS[h[24] as usize % QUESTIONS.len()]);
        }
        parts.join(" ")
    }
}

impl ModelConverser for MockStage {
    fn name(&self) -> &str {
        &self.name
    }

    fn reply(&self, seed: &ConsultationRecord, conversation: &[Turn]) -> Result<Option<String>, ConverseError> {
        let k = doctor_turns_so_far(conversation);
        let h = self.digest(&seed.id, k);
        let u = u32::from_be_bytes([h[28], h[29], h[30], h[31]]) as f64 / (u32::MAX as f64 + 1.0);
        let human = seed.doctor_turns().nth(k).map(|t| t.text.clone());
        Ok(Some(match human {
            Some(text) if u < self.fidelity => text,
            _ => self.synthetic(&h),
        }))
    }
}

/// A candidate model served from a chat endpoint.
pub struct EndpointConverser {
    pub name: String,
    pub endpoint: ChatEndpoint,
    pub system_prompt: String,
}

impl ModelConverser for EndpointConverser {
    fn name(&self) -> &str {
        &self.name
    }

    fn reply(&self, _seed: &ConsultationRecord, conversation: &[Turn]) -> Result<Option<String>, ConverseError> {
        let mut messages = Vec::new();
        if !self.system_prompt.is_empty() {
            messages.push(ChatMessage::new("system", self.system_prompt.clone()));
        }
        for t in conversation {
            let role = match t.role {
                Role::Patient => "user",
                Role::Doctor => "assistant",
            };
            messages.push(ChatMessage::new(role, t.text.clone()));
        }
        self.endpoint
            .chat(&messages)
            .map(Some)
            .map_err(|e| ConverseError::Endpoint(e.to_string()))
    }
}

/// One consultation: the seed's opening patient turn, then alternating model
/// replies and simulated patient turns until either side ends it.
pub fn simulate_conversation(
    seed: &ConsultationRecord,
    converser: &dyn ModelConverser,
    judge: &JudgeGateway,
) -> Result<ConsultationRecord, ConverseError> {
    let opening = seed.first_patient_turn().ok_or_else(|| ConverseError::NoOpening(seed.id.clone()))?;
    let mut conversation = vec![Turn::patient(opening.text.clone())];
    loop {
        let Some(text) = converser.reply(seed, &conversation)? else { break };
        if text.trim().is_empty() {
            return Err(ConverseError::EmptyReply { stage: converser.name().to_string(), record: seed.id.clone() });
        }
        conversation.push(Turn::doctor(text));
        match judge.simulate_patient_turn(seed, &conversation)? {
            PatientTurn::End => break,
            PatientTurn::Utterance(u) => conversation.push(Turn::patient(u)),
        }
    }
    let mut record = ConsultationRecord::new(format!("{}@{}", seed.id, converser.name()), seed.department, conversation);
    record.source = RecordSource::Model;
    Ok(record)
}

pub fn simulate_stage(
    seeds: &[ConsultationRecord],
    converser: &dyn ModelConverser,
    judge: &JudgeGateway,
) -> Result<Vec<ConsultationRecord>, ConverseError> {
    judge
        .map(seeds, |s| simulate_conversation(s, converser, judge))
        .into_iter()
        .collect()
}

/// Simulate every stage over the same seeds and tabulate style distances.
pub fn run_alignment(
    seeds: &[ConsultationRecord],
    conversers: &[&dyn ModelConverser],
    judge: &JudgeGateway,
    mode: NgramMode,
) -> Result<(AlignmentTable, Vec<StageRun>), ConverseError> {
    let stages = conversers
        .iter()
        .map(|c| {
            Ok(StageRun {
                name: c.name().to_string(),
                conversations: simulate_stage(seeds, *c, judge)?,
            })
        })
        .collect::<Result<Vec<_>, ConverseError>>()?;
    Ok((alignment_table(seeds, &stages, mode)?, stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Department;
    use crate::style::Feature;

    fn seed(id: &str, rounds: usize) -> ConsultationRecord {
        let turns = (0..rounds)
            .flat_map(|i| [Turn::patient(format!("{id} symptom {i}")), Turn::doctor(format!("How long? Rest {i}."))])
            .collect();
        ConsultationRecord::new(id, Department::Surgery, turns)
    }

    #[test]
    fn echo_reproduces_seed() {
        let judge = JudgeGateway::mock();
        let s = seed("a", 3);
        let out = simulate_conversation(&s, &HumanEcho, &judge).unwrap();
        assert_eq!(out.turns, s.turns);
        assert_eq!(out.source, RecordSource::Model);
        assert_eq!(out.id, "a@human");
    }

    #[test]
    fn mock_stage_is_deterministic_and_opens_with_seed() {
        let judge = JudgeGateway::mock();
        let s = seed("b", 4);
        let stage = MockStage::new("base", 0.2, 3);
        let a = simulate_conversation(&s, &stage, &judge).unwrap();
        let b = simulate_conversation(&s, &stage, &judge).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.turns[0].text, s.turns[0].text);
        assert!(a.doctor_turns().count() <= judge.settings().max_rounds);
    }

    #[test]
    fn full_fidelity_matches_echo() {
        let judge = JudgeGateway::mock();
        let s = seed("c", 2);
        let a = simulate_conversation(&s, &MockStage::new("x", 1.0, 2), &judge).unwrap();
        assert_eq!(a.turns, s.turns);
    }

    #[test]
    fn higher_fidelity_is_closer() {
        let judge = JudgeGateway::mock();
        let seeds: Vec<_> = (0..30).map(|i| seed(&format!("s{i}"), 1 + i % 5)).collect();
        let far = MockStage::new("far", 0.0, 4);
        let near = MockStage::new("near", 0.9, 1);
        let (table, stages) = run_alignment(&seeds, &[&far, &near], &judge, NgramMode::Count).unwrap();
        assert_eq!(stages.len(), 2);
        let wpr = table.row(Feature::WordsPerRound);
        assert!(wpr.distances[1] < wpr.distances[0]);
        assert!(wpr.transitions[0].mean_diff > 0.0);
        assert!(wpr.transitions[0].p < 0.01);
    }
}
