//! Every external-LLM interaction goes through [`JudgeGateway`]: rubric
//! scoring, answer grading, department classification and patient
//! simulation.
//!
//! The gateway owns the response cache, the retry policy and the cap on
//! in-flight upstream requests. Requests are content addressed: the cache
//! key is a digest of (task, payload, prompt template id, model id), and
//! concurrent identical requests are collapsed so only one reaches the
//! backend.

pub mod backend;
pub mod cache;
pub mod parse;
pub mod prompts;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock, PoisonError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendError, ChatEndpoint, ChatMessage, EndpointConfig, HttpJudge, JudgeBackend, MockJudge};
pub use cache::ResponseCache;
pub use prompts::PromptTemplates;

use crate::model::{ConsultationRecord, Department, EvalScores, Role, SoftSkillScores, Turn, Validate};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge unavailable after {attempts} attempt(s): {last}")]
    JudgeUnavailable { attempts: u32, last: String },
    #[error("could not parse scores from judge reply {reply:?}")]
    UnparseableScore { reply: String },
    #[error("judge score {field}={value} is outside [0,100]")]
    OutOfRange { field: String, value: f64 },
    #[error("could not parse a verdict from judge reply {reply:?}")]
    UnparseableVerdict { reply: String },
    #[error("could not parse judge reply {reply:?}")]
    UnparseableReply { reply: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeTask {
    RateSoftSkills,
    RateEvalMetrics,
    GradeAnswer,
    SimulatePatientTurn,
    ClassifyDepartment,
}

impl JudgeTask {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgeTask::RateSoftSkills => "rate_soft_skills",
            JudgeTask::RateEvalMetrics => "rate_eval_metrics",
            JudgeTask::GradeAnswer => "grade_answer",
            JudgeTask::SimulatePatientTurn => "simulate_patient_turn",
            JudgeTask::ClassifyDepartment => "classify_department",
        }
    }
}

impl fmt::Display for JudgeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub task: JudgeTask,
    /// Task-specific payload as compact JSON.
    pub payload: String,
    pub prompt_template_id: String,
    pub model_id: String,
}

impl JudgeRequest {
    pub fn cache_key(&self) -> String {
        let parts = [
            self.task.as_str(),
            self.payload.as_str(),
            self.prompt_template_id.as_str(),
            self.model_id.as_str(),
        ];
        crate::util::sha256_hex(serde_json::to_vec(&parts).expect("string array serialises"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatientTurn {
    Utterance(String),
    End,
}

/// Payload for tasks that look at one whole record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordPayload {
    pub record_id: String,
    pub department: Department,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradePayload {
    pub question: String,
    pub reference_answer: String,
    pub candidate_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatePayload {
    pub record_id: String,
    pub record_turns: Vec<Turn>,
    pub conversation: Vec<Turn>,
}

pub fn transcript(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| {
            let who = match t.role {
                Role::Patient => "Patient",
                Role::Doctor => "Doctor",
            };
            format!("{who}: {}", t.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeSettings {
    /// Live judge endpoint; the mock is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    pub model_id: String,
    /// Retries after the first attempt for transient failures.
    pub retry_budget: u32,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    /// Doctor turns after which patient simulation stops.
    pub max_rounds: usize,
    pub soft_skills_template: String,
    pub eval_metrics_template: String,
    pub grade_template: String,
    pub patient_sim_template: String,
    pub classify_template: String,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        JudgeSettings {
            endpoint: None,
            model_id: "mock-judge".to_string(),
            retry_budget: 3,
            backoff_base_ms: 500,
            max_in_flight: 8,
            max_rounds: 10,
            soft_skills_template: prompts::SOFT_SKILLS_V1.to_string(),
            eval_metrics_template: prompts::EVAL_METRICS_V1.to_string(),
            grade_template: prompts::GRADE_V1.to_string(),
            patient_sim_template: prompts::PATIENT_SIM_V1.to_string(),
            classify_template: prompts::CLASSIFY_V1.to_string(),
        }
    }
}

impl JudgeSettings {
    fn template_for(&self, task: JudgeTask) -> &str {
        match task {
            JudgeTask::RateSoftSkills => &self.soft_skills_template,
            JudgeTask::RateEvalMetrics => &self.eval_metrics_template,
            JudgeTask::GradeAnswer => &self.grade_template,
            JudgeTask::SimulatePatientTurn => &self.patient_sim_template,
            JudgeTask::ClassifyDepartment => &self.classify_template,
        }
    }
}

/// Counting semaphore bounding upstream requests in flight.
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap_or_else(PoisonError::into_inner);
        while *p == 0 {
            p = self.freed.wait(p).unwrap_or_else(PoisonError::into_inner);
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(PoisonError::into_inner) += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeStats {
    /// Cache misses that went upstream (one per distinct key when nothing fails).
    pub upstream_calls: u64,
    /// Backend invocations including retries.
    pub upstream_attempts: u64,
    pub cache_hits: u64,
}

pub struct JudgeGateway {
    backend: Arc<dyn JudgeBackend>,
    cache: ResponseCache,
    prompts: PromptTemplates,
    settings: JudgeSettings,
    in_flight: Semaphore,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    pool: OnceLock<rayon::ThreadPool>,
    upstream_calls: AtomicU64,
    upstream_attempts: AtomicU64,
    cache_hits: AtomicU64,
}

impl JudgeGateway {
    pub fn new(backend: Arc<dyn JudgeBackend>, cache: ResponseCache, settings: JudgeSettings) -> Self {
        JudgeGateway {
            backend,
            cache,
            prompts: PromptTemplates::default(),
            in_flight: Semaphore::new(settings.max_in_flight),
            settings,
            key_locks: Mutex::new(HashMap::new()),
            pool: OnceLock::new(),
            upstream_calls: AtomicU64::new(0),
            upstream_attempts: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// A gateway over the deterministic mock with an in-memory cache and no
    /// backoff delay.
    pub fn mock() -> Self {
        let settings = JudgeSettings {
            backoff_base_ms: 0,
            ..JudgeSettings::default()
        };
        Self::new(Arc::new(MockJudge::new()), ResponseCache::in_memory(), settings)
    }

    pub fn with_prompts(mut self, prompts: PromptTemplates) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn settings(&self) -> &JudgeSettings {
        &self.settings
    }

    pub fn stats(&self) -> JudgeStats {
        JudgeStats {
            upstream_calls: self.upstream_calls.load(Ordering::SeqCst),
            upstream_attempts: self.upstream_attempts.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    /// Run `f` over `items` on a pool sized to the in-flight cap, returning
    /// results in input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        use rayon::prelude::*;
        let pool = self.pool.get_or_init(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.settings.max_in_flight.max(1))
                .build()
                .expect("thread pool")
        });
        pool.install(|| items.par_iter().map(&f).collect())
    }

    pub fn request(&self, task: JudgeTask, payload: &impl Serialize) -> JudgeRequest {
        JudgeRequest {
            task,
            payload: serde_json::to_string(payload).expect("payload serialises"),
            prompt_template_id: self.settings.template_for(task).to_string(),
            model_id: self.settings.model_id.clone(),
        }
    }

    fn render(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        let tid = &request.prompt_template_id;
        let missing = || JudgeError::UnknownTemplate(tid.clone());
        let payload = &request.payload;
        let bad = |e: serde_json::Error| JudgeError::Precondition(format!("payload: {e}"));
        match request.task {
            JudgeTask::RateSoftSkills | JudgeTask::RateEvalMetrics | JudgeTask::ClassifyDepartment => {
                let p: RecordPayload = serde_json::from_str(payload).map_err(bad)?;
                self.prompts
                    .render(tid, &[("transcript", &transcript(&p.turns))])
                    .ok_or_else(missing)
            }
            JudgeTask::GradeAnswer => {
                let p: GradePayload = serde_json::from_str(payload).map_err(bad)?;
                self.prompts
                    .render(
                        tid,
                        &[
                            ("question", &p.question),
                            ("reference_answer", &p.reference_answer),
                            ("candidate_answer", &p.candidate_answer),
                        ],
                    )
                    .ok_or_else(missing)
            }
            JudgeTask::SimulatePatientTurn => {
                let p: SimulatePayload = serde_json::from_str(payload).map_err(bad)?;
                self.prompts
                    .render(
                        tid,
                        &[
                            ("record_transcript", &transcript(&p.record_turns)),
                            ("conversation", &transcript(&p.conversation)),
                        ],
                    )
                    .ok_or_else(missing)
            }
        }
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap_or_else(PoisonError::into_inner);
        locks.entry(key.to_string()).or_default().clone()
    }

    fn release_key(&self, key: &str) {
        let mut locks = self.key_locks.lock().unwrap_or_else(PoisonError::into_inner);
        if locks.get(key).is_some_and(|l| Arc::strong_count(l) == 1) {
            locks.remove(key);
        }
    }

    fn call_upstream(&self, request: &JudgeRequest, prompt: &str) -> Result<String, JudgeError> {
        let _permit = self.in_flight.acquire();
        self.upstream_calls.fetch_add(1, Ordering::SeqCst);
        let budget = self.settings.retry_budget;
        let mut attempt = 0u32;
        loop {
            self.upstream_attempts.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(request, prompt) {
                Ok(reply) => return Ok(reply),
                Err(BackendError::Transient(msg)) if attempt < budget => {
                    log::debug!("{} attempt {} failed: {msg}; retrying", request.task, attempt + 1);
                    let delay = self.settings.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
                Err(BackendError::Transient(last)) | Err(BackendError::Fatal(last)) => {
                    return Err(JudgeError::JudgeUnavailable {
                        attempts: attempt + 1,
                        last,
                    })
                }
            }
        }
    }

    /// Raw reply for a request, from cache when possible.
    pub fn call(&self, request: &JudgeRequest) -> Result<String, JudgeError> {
        if request.payload.trim().is_empty() {
            return Err(JudgeError::Precondition("empty payload".into()));
        }
        let key = request.cache_key();
        let lock = self.key_lock(&key);
        let result = {
            let _guard = lock.lock().unwrap_or_else(PoisonError::into_inner);
            match self.cache.get(&key)? {
                Some(hit) => {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    Ok(hit)
                }
                None => {
                    let prompt = self.render(request)?;
                    let reply = self.call_upstream(request, &prompt)?;
                    self.cache.put(&key, &reply)?;
                    Ok(reply)
                }
            }
        };
        drop(lock);
        self.release_key(&key);
        result
    }

    fn record_payload(record: &ConsultationRecord) -> RecordPayload {
        RecordPayload {
            record_id: record.id.clone(),
            department: record.department,
            turns: record.turns.clone(),
        }
    }

    fn check_record(record: &ConsultationRecord) -> Result<(), JudgeError> {
        match record.violations().first() {
            Some(v) => Err(JudgeError::Precondition(format!("record {}: {v}", record.id))),
            None => Ok(()),
        }
    }

    pub fn rate_soft_skills(&self, record: &ConsultationRecord) -> Result<SoftSkillScores, JudgeError> {
        Self::check_record(record)?;
        let req = self.request(JudgeTask::RateSoftSkills, &Self::record_payload(record));
        let reply = self.call(&req)?;
        let v = parse::scan_scores(&reply, &SoftSkillScores::FIELDS)?;
        Ok(SoftSkillScores::new(v[0], v[1], v[2]))
    }

    pub fn rate_eval_metrics(&self, record: &ConsultationRecord) -> Result<EvalScores, JudgeError> {
        Self::check_record(record)?;
        let req = self.request(JudgeTask::RateEvalMetrics, &Self::record_payload(record));
        let reply = self.call(&req)?;
        let v = parse::scan_scores(&reply, &EvalScores::FIELDS)?;
        Ok(EvalScores::new(v[0], v[1], v[2], v[3]))
    }

    pub fn classify_department(&self, record: &ConsultationRecord) -> Result<Department, JudgeError> {
        Self::check_record(record)?;
        let req = self.request(JudgeTask::ClassifyDepartment, &Self::record_payload(record));
        Ok(parse::parse_department(&self.call(&req)?))
    }

    /// Binary verdict. A candidate identical to the reference (modulo
    /// surrounding whitespace) is correct without consulting the judge.
    pub fn grade_answer(&self, question: &str, reference: &str, candidate: &str) -> Result<Verdict, JudgeError> {
        for (name, s) in [("question", question), ("reference answer", reference), ("candidate answer", candidate)] {
            if s.trim().is_empty() {
                return Err(JudgeError::Precondition(format!("{name} is empty")));
            }
        }
        if candidate.trim() == reference.trim() {
            return Ok(Verdict::Correct);
        }
        let req = self.request(
            JudgeTask::GradeAnswer,
            &GradePayload {
                question: question.to_string(),
                reference_answer: reference.to_string(),
                candidate_answer: candidate.to_string(),
            },
        );
        parse::parse_verdict(&self.call(&req)?)
    }

    /// Next simulated patient message grounded in `record`, or `End` once the
    /// doctor side has spoken `max_rounds` times or the judge ends the
    /// consultation. `conversation` must open with the record's first
    /// patient turn.
    pub fn simulate_patient_turn(
        &self,
        record: &ConsultationRecord,
        conversation: &[Turn],
    ) -> Result<PatientTurn, JudgeError> {
        let opening = record
            .first_patient_turn()
            .ok_or_else(|| JudgeError::Precondition(format!("record {} has no patient turn", record.id)))?;
        match conversation.first() {
            None => return Err(JudgeError::Precondition("conversation is empty".into())),
            Some(t) if t.role != Role::Patient || t.text != opening.text => {
                return Err(JudgeError::Precondition(
                    "conversation must start with the record's first patient turn".into(),
                ))
            }
            Some(_) => {}
        }
        let rounds = conversation.iter().filter(|t| t.role == Role::Doctor).count();
        if rounds >= self.settings.max_rounds {
            return Ok(PatientTurn::End);
        }
        let req = self.request(
            JudgeTask::SimulatePatientTurn,
            &SimulatePayload {
                record_id: record.id.clone(),
                record_turns: record.turns.clone(),
                conversation: conversation.to_vec(),
            },
        );
        parse::parse_patient_reply(&self.call(&req)?)
    }
}
