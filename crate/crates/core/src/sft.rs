//! Chat-format fine-tuning export.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConsultationRecord, QAPair, Role, Turn};
use crate::util::{atomic_write, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SFTExample {
    pub messages: Vec<ChatMessage>,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SftError {
    #[error("nothing to export")]
    EmptyInput,
    #[error("split fractions {0:?} must be 2 or 3 non-negative values summing to 1")]
    InvalidSplit(Vec<f64>),
    #[error("mix ratio {0} outside [0, 1]")]
    InvalidMix(f64),
    #[error("example {index}: {detail}")]
    Malformed { index: usize, detail: String },
}

fn message(role: ChatRole, content: &str) -> ChatMessage {
    ChatMessage { role, content: content.to_string() }
}

fn with_system(system_prompt: &str) -> Vec<ChatMessage> {
    if system_prompt.is_empty() {
        Vec::new()
    } else {
        vec![message(ChatRole::System, system_prompt)]
    }
}

pub fn record_to_example(record: &ConsultationRecord, system_prompt: &str) -> SFTExample {
    let mut messages = with_system(system_prompt);
    messages.extend(record.turns.iter().map(|t| {
        let role = match t.role {
            Role::Patient => ChatRole::User,
            Role::Doctor => ChatRole::Assistant,
        };
        message(role, &t.text)
    }));
    let tags = [
        "source:conversation".to_string(),
        format!("department:{}", record.department.key()),
    ]
    .into();
    SFTExample { messages, tags }
}

pub fn qa_to_example(pair: &QAPair, system_prompt: &str) -> SFTExample {
    let mut messages = with_system(system_prompt);
    messages.push(message(ChatRole::User, &pair.question));
    messages.push(message(ChatRole::Assistant, &pair.answer));
    let tags = [
        "source:knowledge".to_string(),
        format!("kind:{}", pair.kind.as_str()),
        format!("aspect:{}", pair.aspect.as_str()),
    ]
    .into();
    SFTExample { messages, tags }
}

/// Inverse of [`record_to_example`]: the turns, without any system message.
pub fn example_to_turns(example: &SFTExample) -> Vec<Turn> {
    let mut turns: Vec<Turn> = example
        .messages
        .iter()
        .filter_map(|m| match m.role {
            ChatRole::System => None,
            ChatRole::User => Some(Turn::patient(m.content.clone())),
            ChatRole::Assistant => Some(Turn::doctor(m.content.clone())),
        })
        .collect();
    for (i, t) in turns.iter_mut().enumerate() {
        t.index = i;
    }
    turns
}

/// Optional leading system message, then strict user/assistant alternation
/// starting with user, with at least one assistant message.
pub fn check_alternation(example: &SFTExample) -> Result<(), String> {
    let body = match example.messages.first() {
        Some(m) if m.role == ChatRole::System => &example.messages[1..],
        _ => &example.messages[..],
    };
    for (i, m) in body.iter().enumerate() {
        let expected = if i % 2 == 0 { ChatRole::User } else { ChatRole::Assistant };
        if m.role != expected {
            return Err(format!("message {i} is {:?}, expected {expected:?}", m.role));
        }
    }
    if !body.iter().any(|m| m.role == ChatRole::Assistant) {
        return Err("no assistant message".into());
    }
    Ok(())
}

/// Check every line of an emitted split file.
pub fn validate_file(path: &Path) -> Result<usize, SftError> {
    let examples: Vec<SFTExample> = crate::util::read_jsonl(path).map_err(|e| SftError::Malformed {
        index: 0,
        detail: e.to_string(),
    })?;
    for (index, ex) in examples.iter().enumerate() {
        check_alternation(ex).map_err(|detail| SftError::Malformed { index, detail })?;
    }
    Ok(examples.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub global_batch_size: u32,
    pub learning_rate: f64,
    pub optimizer: String,
    pub max_seq_len_tokens: u32,
    pub epochs: u32,
    pub adapter: String,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            global_batch_size: 16,
            learning_rate: 2e-5,
            optimizer: "AdamW".into(),
            max_seq_len_tokens: 1024,
            epochs: 4,
            adapter: "low-rank adaptation".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSettings {
    pub system_prompt: String,
    /// Target fraction of knowledge examples. `None` keeps every input.
    pub mix_ratio: Option<f64>,
    pub split_fracs: Vec<f64>,
    pub hyperparams: Hyperparams,
}

impl Default for ExportSettings {
    fn default() -> Self {
        ExportSettings {
            system_prompt: String::new(),
            mix_ratio: None,
            split_fracs: vec![0.9, 0.1],
            hyperparams: Hyperparams::default(),
        }
    }
}

impl ExportSettings {
    pub fn validate(&self) -> Result<(), SftError> {
        let f = &self.split_fracs;
        let sum: f64 = f.iter().sum();
        if !(2..=3).contains(&f.len()) || f.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SftError::InvalidSplit(f.clone()));
        }
        if let Some(r) = self.mix_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(SftError::InvalidMix(r));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixCounts {
    pub conversation: usize,
    pub knowledge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub global_batch_size: u32,
    pub learning_rate: f64,
    pub optimizer: String,
    pub max_seq_len_tokens: u32,
    pub epochs: u32,
    pub adapter: String,
    pub mix: MixCounts,
    pub split_seed: u64,
    pub splits: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub splits: Vec<(String, Vec<SFTExample>)>,
    pub manifest: TrainManifest,
}

/// How many of each source to keep so knowledge makes up `ratio` of the
/// result while dropping as little as possible.
pub fn mix_counts(conversations: usize, knowledge: usize, ratio: Option<f64>) -> MixCounts {
    let (c, k) = (conversations as f64, knowledge as f64);
    let (conversation, knowledge) = match ratio {
        None => (conversations, knowledge),
        Some(r) if r <= 0.0 => (conversations, 0),
        Some(r) if r >= 1.0 => (0, knowledge),
        Some(r) if k * (1.0 - r) > r * c => (conversations, ((r * c / (1.0 - r)).round() as usize).min(knowledge)),
        Some(r) => (((k * (1.0 - r) / r).round() as usize).min(conversations), knowledge),
    };
    MixCounts { conversation, knowledge }
}

/// Largest-remainder apportionment of `n` items over `fracs`.
pub fn split_sizes(n: usize, fracs: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    sizes
}

fn keep_subset<T: Clone>(items: &[T], keep: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if keep >= items.len() {
        return items.to_vec();
    }
    let mut idx = index::sample(rng, items.len(), keep).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

pub fn build_dataset(
    records: &[ConsultationRecord],
    pairs: &[QAPair],
    settings: &ExportSettings,
    seed: u64,
) -> Result<Dataset, SftError> {
    settings.validate()?;
    let mix = mix_counts(records.len(), pairs.len(), settings.mix_ratio);
    if mix.conversation + mix.knowledge == 0 {
        return Err(SftError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = keep_subset(records, mix.conversation, &mut rng);
    let pairs = keep_subset(pairs, mix.knowledge, &mut rng);
    let sys = settings.system_prompt.as_str();
    let mut examples: Vec<SFTExample> = records.par_iter().map(|r| record_to_example(r, sys)).collect();
    examples.par_extend(pairs.par_iter().map(|p| qa_to_example(p, sys)));
    examples.shuffle(&mut rng);

    let names = ["train", "val", "test"];
    let sizes = split_sizes(examples.len(), &settings.split_fracs);
    let mut rest = examples.into_iter();
    let splits: Vec<(String, Vec<SFTExample>)> = sizes
        .iter()
        .zip(names)
        .map(|(&n, name)| (name.to_string(), rest.by_ref().take(n).collect()))
        .collect();
    let h = &settings.hyperparams;
    let manifest = TrainManifest {
        global_batch_size: h.global_batch_size,
        learning_rate: h.learning_rate,
        optimizer: h.optimizer.clone(),
        max_seq_len_tokens: h.max_seq_len_tokens,
        epochs: h.epochs,
        adapter: h.adapter.clone(),
        mix,
        split_seed: seed,
        splits: splits.iter().map(|(n, v)| (n.clone(), v.len())).collect(),
    };
    Ok(Dataset { splits, manifest })
}

pub fn encode_examples(examples: &[SFTExample]) -> Vec<u8> {
    let mut out = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut out, ex).expect("example serializes");
        out.push(b'\n');
    }
    out
}

/// Write `<split>.jsonl` files and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, examples) in &dataset.splits {
        let path = dir.join(format!("{name}.jsonl"));
        atomic_write(&path, &encode_examples(examples))?;
        written.push(path);
    }
    let path = dir.join("manifest.json");
    write_json(&path, &dataset.manifest)?;
    written.push(path);
    Ok(written)
}
