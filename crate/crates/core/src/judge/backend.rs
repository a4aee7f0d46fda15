//! Upstream backends: an OpenAI-compatible chat-completions client and a
//! deterministic offline mock.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{GradePayload, JudgeRequest, JudgeTask, RecordPayload, SimulatePayload};
use crate::model::{Department, Role};
use crate::style::tokenize;
use crate::util::sha256_hex;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

pub trait JudgeBackend: Send + Sync {
    /// Produce the raw reply for a rendered prompt.
    fn complete(&self, request: &JudgeRequest, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_api_key_env() -> String {
    "MEDSFT_API_KEY".to_string()
}

fn default_timeout_secs() -> u64 {
    120
}

/// Blocking client for a `/chat/completions` endpoint.
pub struct ChatEndpoint {
    config: EndpointConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(ChatEndpoint {
            config,
            api_key,
            client,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model_id,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| BackendError::Transient(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal(format!("no choices[0].message.content in {value}")))
    }
}

/// Judge backed by a live chat endpoint: the rendered prompt is sent as a
/// single user message.
pub struct HttpJudge {
    endpoint: ChatEndpoint,
}

impl HttpJudge {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        Ok(HttpJudge {
            endpoint: ChatEndpoint::new(config)?,
        })
    }
}

impl JudgeBackend for HttpJudge {
    fn complete(&self, _request: &JudgeRequest, prompt: &str) -> Result<String, BackendError> {
        self.endpoint.chat(&[ChatMessage::new("user", prompt)])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    pub task: JudgeTask,
    pub subject: String,
    pub reply: String,
}

/// Deterministic offline judge. Replies are pure functions of the request
/// payload unless a fixture overrides them. Fixture subjects are the record
/// id (rating, classification), the question text (grading), or
/// `<record_id>#<patient_turn_no>` (patient simulation).
#[derive(Debug, Default, Clone)]
pub struct MockJudge {
    fixtures: HashMap<(JudgeTask, String), String>,
}

impl MockJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture(mut self, task: JudgeTask, subject: impl Into<String>, reply: impl Into<String>) -> Self {
        self.fixtures.insert((task, subject.into()), reply.into());
        self
    }

    /// Load fixtures from a JSONL file of `{task, subject, reply}` lines.
    pub fn load_fixtures(mut self, path: &Path) -> std::io::Result<Self> {
        for f in crate::util::read_jsonl::<MockFixture>(path)? {
            self.fixtures.insert((f.task, f.subject), f.reply);
        }
        Ok(self)
    }

    fn digest_bytes(salt: &str, subject: &str) -> Vec<u8> {
        hex::decode(sha256_hex(format!("{salt}\u{1f}{subject}"))).expect("hex digest")
    }

    /// Three correlated scores: a shared base in [40,95] plus per-skill jitter.
    pub fn soft_skill_reply(record_id: &str) -> String {
        let h = Self::digest_bytes("soft", record_id);
        let base = 40 + (h[0] as i32 % 56);
        let s: Vec<i32> = (1..=3)
            .map(|i| (base + (h[i] as i32 % 21) - 10).clamp(0, 100))
            .collect();
        format!(
            "professionalism: {}, explainability: {}, emotional_support: {}",
            s[0], s[1], s[2]
        )
    }

    pub fn eval_reply(record_id: &str) -> String {
        let h = Self::digest_bytes("eval", record_id);
        let base = 70 + (h[0] as i32 % 26);
        let s: Vec<i32> = (1..=4)
            .map(|i| (base + (h[i] as i32 % 9) - 4).clamp(0, 100))
            .collect();
        format!(
            "professionalism: {}, accuracy: {}, satisfaction: {}, trustworthiness: {}",
            s[0], s[1], s[2], s[3]
        )
    }

    fn grade_reply(p: &GradePayload) -> String {
        let reference: BTreeSet<String> = tokenize(&p.reference_answer).into_iter().collect();
        let candidate: BTreeSet<String> = tokenize(&p.candidate_answer).into_iter().collect();
        let union = reference.union(&candidate).count();
        let inter = reference.intersection(&candidate).count();
        if union > 0 && inter * 2 >= union {
            "CORRECT".to_string()
        } else {
            "INCORRECT - candidate does not match the reference".to_string()
        }
    }

    fn simulate_reply(p: &SimulatePayload) -> String {
        let asked = p.conversation.iter().filter(|t| t.role == Role::Patient).count();
        p.record_turns
            .iter()
            .filter(|t| t.role == Role::Patient)
            .nth(asked)
            .map(|t| t.text.clone())
            .unwrap_or_else(|| super::parse::END_MARKER.to_string())
    }

    fn classify_reply(p: &RecordPayload) -> String {
        match p.department {
            Department::Unclassified => {
                let h = Self::digest_bytes("dept", &p.record_id);
                Department::CLASSIFIED[h[0] as usize % Department::CLASSIFIED.len()]
                    .display_name()
                    .to_string()
            }
            d => d.display_name().to_string(),
        }
    }

    fn subject(request: &JudgeRequest) -> Result<String, BackendError> {
        let bad = |e: serde_json::Error| BackendError::Fatal(format!("mock: bad payload: {e}"));
        Ok(match request.task {
            JudgeTask::RateSoftSkills | JudgeTask::RateEvalMetrics | JudgeTask::ClassifyDepartment => {
                serde_json::from_str::<RecordPayload>(&request.payload).map_err(bad)?.record_id
            }
            JudgeTask::GradeAnswer => serde_json::from_str::<GradePayload>(&request.payload).map_err(bad)?.question,
            JudgeTask::SimulatePatientTurn => {
                let p: SimulatePayload = serde_json::from_str(&request.payload).map_err(bad)?;
                let asked = p.conversation.iter().filter(|t| t.role == Role::Patient).count();
                format!("{}#{asked}", p.record_id)
            }
        })
    }
}

impl JudgeBackend for MockJudge {
    fn complete(&self, request: &JudgeRequest, _prompt: &str) -> Result<String, BackendError> {
        let subject = Self::subject(request)?;
        if let Some(reply) = self.fixtures.get(&(request.task, subject.clone())) {
            return Ok(reply.clone());
        }
        let bad = |e: serde_json::Error| BackendError::Fatal(format!("mock: bad payload: {e}"));
        Ok(match request.task {
            JudgeTask::RateSoftSkills => Self::soft_skill_reply(&subject),
            JudgeTask::RateEvalMetrics => Self::eval_reply(&subject),
            JudgeTask::GradeAnswer => {
                Self::grade_reply(&serde_json::from_str(&request.payload).map_err(bad)?)
            }
            JudgeTask::SimulatePatientTurn => {
                Self::simulate_reply(&serde_json::from_str(&request.payload).map_err(bad)?)
            }
            JudgeTask::ClassifyDepartment => {
                Self::classify_reply(&serde_json::from_str(&request.payload).map_err(bad)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve `responses` in order on a local socket, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body_in = vec![0u8; len];
                reader.read_exact(&mut body_in).unwrap();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/v1")
    }

    fn endpoint(base_url: String) -> ChatEndpoint {
        ChatEndpoint::new(EndpointConfig {
            base_url,
            model_id: "judge".into(),
            api_key_env: "MEDSFT_TEST_UNSET_KEY".into(),
            temperature: 0.0,
            timeout_secs: 10,
        })
        .unwrap()
    }

    #[test]
    fn http_endpoint_parses_chat_completion() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"CORRECT"}}]}"#;
        let ep = endpoint(serve(vec![(200, body.to_string())]));
        assert_eq!(ep.chat(&[ChatMessage::new("user", "hi")]).unwrap(), "CORRECT");
    }

    #[test]
    fn http_status_classification() {
        let ep = endpoint(serve(vec![(503, "{}".into()), (400, "{}".into())]));
        assert!(matches!(ep.chat(&[]), Err(BackendError::Transient(_))));
        assert!(matches!(ep.chat(&[]), Err(BackendError::Fatal(_))));
    }

    #[test]
    fn mock_soft_skills_are_a_pure_function_of_id() {
        assert_eq!(MockJudge::soft_skill_reply("r1"), MockJudge::soft_skill_reply("r1"));
        let v = super::super::parse::scan_scores(
            &MockJudge::soft_skill_reply("r1"),
            &["professionalism", "explainability", "emotional_support"],
        )
        .unwrap();
        assert!(v.iter().all(|x| (0.0..=100.0).contains(x)));
    }
}
