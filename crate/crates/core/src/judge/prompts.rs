//! Prompt templates with `{placeholder}` substitution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::JudgeTask;

pub const SOFT_SKILLS_V1: &str = "soft_skills.v1";
pub const EVAL_METRICS_V1: &str = "eval_metrics.v1";
pub const GRADE_V1: &str = "grade.v1";
pub const PATIENT_SIM_V1: &str = "patient_sim.v1";
pub const CLASSIFY_V1: &str = "classify.v1";

const SOFT_SKILLS_TEXT: &str = "\
You are reviewing an online medical consultation between a patient and a doctor.
Rate the doctor on each skill from 0 (poor) to 100 (excellent):
- professionalism: medical knowledge, rigour and adherence to clinical norms
- explainability: how clearly the doctor explains the condition and the advice
- emotional_support: empathy, reassurance and attention to the patient's feelings

Reply with exactly one line in this form and nothing else:
professionalism: <number>, explainability: <number>, emotional_support: <number>

Consultation:
{transcript}";

const EVAL_METRICS_TEXT: &str = "\
You are evaluating an online medical consultation between a patient and a doctor.
Rate it on each metric from 0 (poor) to 100 (excellent):
- professionalism: the doctor's professional conduct and expertise
- accuracy: correctness of the diagnosis and advice
- satisfaction: how satisfied the patient would be
- trustworthiness: how much the patient would trust this doctor

Reply with exactly one line in this form and nothing else:
professionalism: <number>, accuracy: <number>, satisfaction: <number>, trustworthiness: <number>

Consultation:
{transcript}";

const GRADE_TEXT: &str = "\
Grade a candidate answer to a medical knowledge question against the reference answer.
Reply CORRECT if the candidate is consistent with the reference on the facts that matter,
otherwise reply INCORRECT followed by a short reason.

Question: {question}
Reference answer: {reference_answer}
Candidate answer: {candidate_answer}";

const PATIENT_SIM_TEXT: &str = "\
You are role-playing the patient from the real consultation below. Stay faithful to the
patient's actual condition, age, gender and concerns. Answer the doctor's latest message as
the patient would, in one short message. If the consultation has reached a natural end,
reply with the single word END.

Real consultation (for grounding only):
{record_transcript}

Conversation so far:
{conversation}";

const CLASSIFY_TEXT: &str = "\
Assign the consultation below to exactly one outpatient department from this list:
Internal Medicine, Orthopedics, Otorhinolaryngology (ENT), Dermatovenereology, Psychiatry,
Gynecology, Ophthalmology, Oral and Maxillofacial Surgery, Surgery, Andrology, Others.
Reply with the department name only.

Consultation:
{transcript}";

/// Template text by id. Overrides from config replace or add ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    templates: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        let templates = [
            (SOFT_SKILLS_V1, SOFT_SKILLS_TEXT),
            (EVAL_METRICS_V1, EVAL_METRICS_TEXT),
            (GRADE_V1, GRADE_TEXT),
            (PATIENT_SIM_V1, PATIENT_SIM_TEXT),
            (CLASSIFY_V1, CLASSIFY_TEXT),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        PromptTemplates { templates }
    }
}

impl PromptTemplates {
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, String>) -> Self {
        for (k, v) in overrides {
            self.templates.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    /// Substitute `{name}` placeholders. Unknown placeholders are left as is.
    pub fn render(&self, id: &str, vars: &[(&str, &str)]) -> Option<String> {
        let mut text = self.get(id)?.to_string();
        for (k, v) in vars {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        Some(text)
    }
}

pub fn default_template_id(task: JudgeTask) -> &'static str {
    match task {
        JudgeTask::RateSoftSkills => SOFT_SKILLS_V1,
        JudgeTask::RateEvalMetrics => EVAL_METRICS_V1,
        JudgeTask::GradeAnswer => GRADE_V1,
        JudgeTask::SimulatePatientTurn => PATIENT_SIM_V1,
        JudgeTask::ClassifyDepartment => CLASSIFY_V1,
    }
}
