//! Line-delimited JSON corpora: consultation records, disease knowledge and
//! medicine knowledge.
//!
//! Record line:
//! `{"id":..,"department":..,"turns":[{"role":"patient"|"doctor","text":..}],"doctor_meta":{..}?,"source":"human"|"model"|"simulated"}`
//!
//! Knowledge line: `{"name":..,"aspects":{"<aspect_key>":"<text>",..}}`
//!
//! Blank lines are ignored and do not count toward line totals.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    normalize, AspectKey, ConsultationRecord, KnowledgeEntry, KnowledgeKind, ScoredRecord,
    Validate, Violation,
};
use crate::util::{atomic_write, sha256_hex};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {cause}")]
    Parse { line: usize, cause: String },
    #[error("duplicate knowledge entry name {0:?}")]
    DuplicateName(String),
    #[error("record {id} is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRecord { id: String, violations: Vec<Violation> },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub cause: String,
}

/// Items parsed from a corpus file. In lenient mode `skipped` holds the
/// lines that failed; in strict mode it is always empty.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub skipped: Vec<LineError>,
    pub total_lines: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Records,
    Diseases,
    Medicines,
}

impl From<KnowledgeKind> for CorpusKind {
    fn from(k: KnowledgeKind) -> Self {
        match k {
            KnowledgeKind::Disease => CorpusKind::Diseases,
            KnowledgeKind::Medicine => CorpusKind::Medicines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub path: PathBuf,
    pub kind: CorpusKind,
    pub count: usize,
    pub content_hash: String,
}

impl CorpusManifest {
    pub fn for_file(path: &Path, kind: CorpusKind, count: usize) -> Result<Self, IngestError> {
        let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
        Ok(CorpusManifest {
            path: path.to_path_buf(),
            kind,
            count,
            content_hash: sha256_hex(&bytes),
        })
    }
}

/// Split raw bytes into (1-based line number, line) pairs, skipping blanks.
fn numbered_lines(bytes: &[u8]) -> Vec<(usize, &[u8])> {
    bytes
        .split(|b| *b == b'\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.iter().all(|b| b.is_ascii_whitespace()))
        .collect()
}

fn parse_lines<T, F>(bytes: &[u8], mode: ParseMode, parse: F) -> Result<Loaded<T>, IngestError>
where
    T: Send,
    F: Fn(&str) -> Result<T, String> + Sync,
{
    let lines = numbered_lines(bytes);
    let parsed: Vec<(usize, Result<T, String>)> = lines
        .par_iter()
        .map(|(no, raw)| {
            let res = std::str::from_utf8(raw)
                .map_err(|e| format!("invalid UTF-8: {e}"))
                .and_then(&parse);
            (*no, res)
        })
        .collect();
    let total_lines = parsed.len();
    let mut items = Vec::with_capacity(total_lines);
    let mut skipped = Vec::new();
    for (line, res) in parsed {
        match res {
            Ok(v) => items.push(v),
            Err(cause) if mode == ParseMode::Lenient => skipped.push(LineError { line, cause }),
            Err(cause) => return Err(IngestError::Parse { line, cause }),
        }
    }
    Ok(Loaded {
        items,
        skipped,
        total_lines,
    })
}

fn parse_record_line(line: &str) -> Result<ConsultationRecord, String> {
    let raw: ConsultationRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.id.trim().is_empty() {
        return Err("empty id".into());
    }
    normalize(&raw).map_err(|e| e.to_string())
}

fn parse_scored_line(line: &str) -> Result<ScoredRecord, String> {
    let mut raw: ScoredRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.record.id.trim().is_empty() {
        return Err("empty id".into());
    }
    raw.record = normalize(&raw.record).map_err(|e| e.to_string())?;
    let violations = raw.violations();
    if let Some(v) = violations.first() {
        return Err(v.to_string());
    }
    Ok(raw)
}

/// Reject a second occurrence of any id; in lenient mode the duplicate line is
/// skipped instead.
fn dedup_ids<T>(
    loaded: Loaded<T>,
    line_numbers: Vec<usize>,
    id_of: impl Fn(&T) -> &str,
    mode: ParseMode,
) -> Result<Loaded<T>, IngestError> {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(loaded.items.len());
    let mut skipped = loaded.skipped;
    for (item, line) in loaded.items.into_iter().zip(line_numbers) {
        if seen.insert(id_of(&item).to_string()) {
            items.push(item);
        } else {
            let cause = format!("duplicate record id {:?}", id_of(&item));
            match mode {
                ParseMode::Strict => return Err(IngestError::Parse { line, cause }),
                ParseMode::Lenient => skipped.push(LineError { line, cause }),
            }
        }
    }
    skipped.sort_by_key(|e| e.line);
    Ok(Loaded {
        items,
        skipped,
        total_lines: loaded.total_lines,
    })
}

fn ok_line_numbers(bytes: &[u8], skipped: &[LineError]) -> Vec<usize> {
    let bad: HashSet<usize> = skipped.iter().map(|e| e.line).collect();
    numbered_lines(bytes)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| !bad.contains(n))
        .collect()
}

/// Parse consultation records from JSONL bytes. Every returned record is
/// normalized and valid; input order is preserved.
pub fn parse_records(bytes: &[u8], mode: ParseMode) -> Result<Loaded<ConsultationRecord>, IngestError> {
    let loaded = parse_lines(bytes, mode, parse_record_line)?;
    let lines = ok_line_numbers(bytes, &loaded.skipped);
    dedup_ids(loaded, lines, |r| r.id.as_str(), mode)
}

pub fn load_records(path: &Path, mode: ParseMode) -> Result<Loaded<ConsultationRecord>, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    parse_records(&bytes, mode)
}

/// Records with optional attached scores (the scored-corpus line shape).
pub fn load_scored(path: &Path, mode: ParseMode) -> Result<Loaded<ScoredRecord>, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let loaded = parse_lines(&bytes, mode, parse_scored_line)?;
    let lines = ok_line_numbers(&bytes, &loaded.skipped);
    dedup_ids(loaded, lines, |r| r.record.id.as_str(), mode)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnowledgeLine {
    name: String,
    aspects: BTreeMap<String, String>,
}

fn parse_knowledge_line(line: &str, kind: KnowledgeKind) -> Result<KnowledgeEntry, String> {
    let raw: KnowledgeLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut aspects = BTreeMap::new();
    for (k, v) in raw.aspects {
        let key = AspectKey::parse(&k)
            .filter(|a| a.kind() == kind)
            .ok_or_else(|| format!("unknown {kind} aspect key {k:?}"))?;
        aspects.insert(key, v);
    }
    let entry = KnowledgeEntry {
        kind,
        name: raw.name,
        aspects,
    };
    match entry.violations().first() {
        Some(v) => Err(v.to_string()),
        None => Ok(entry),
    }
}

pub fn parse_knowledge(
    bytes: &[u8],
    kind: KnowledgeKind,
    mode: ParseMode,
) -> Result<Loaded<KnowledgeEntry>, IngestError> {
    let loaded = parse_lines(bytes, mode, |l| parse_knowledge_line(l, kind))?;
    let mut seen = HashSet::new();
    for e in &loaded.items {
        if !seen.insert(e.name.as_str()) {
            return Err(IngestError::DuplicateName(e.name.clone()));
        }
    }
    Ok(loaded)
}

pub fn load_knowledge(
    path: &Path,
    kind: KnowledgeKind,
    mode: ParseMode,
) -> Result<Loaded<KnowledgeEntry>, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    parse_knowledge(&bytes, kind, mode)
}

/// Serialise records to JSONL bytes. Fails if any record violates an invariant.
pub fn encode_records(records: &[ConsultationRecord]) -> Result<Vec<u8>, IngestError> {
    let mut buf = Vec::new();
    for r in records {
        let violations = r.violations();
        if !violations.is_empty() {
            return Err(IngestError::InvalidRecord {
                id: r.id.clone(),
                violations,
            });
        }
        serde_json::to_writer(&mut buf, r).expect("record serialisation cannot fail");
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_records(path: &Path, records: &[ConsultationRecord]) -> Result<CorpusManifest, IngestError> {
    let buf = encode_records(records)?;
    atomic_write(path, &buf).map_err(|e| IngestError::io(path, e))?;
    Ok(CorpusManifest {
        path: path.to_path_buf(),
        kind: CorpusKind::Records,
        count: records.len(),
        content_hash: sha256_hex(&buf),
    })
}

pub fn write_scored(path: &Path, records: &[ScoredRecord]) -> Result<CorpusManifest, IngestError> {
    let mut buf = Vec::new();
    for r in records {
        let violations = r.violations();
        if !violations.is_empty() {
            return Err(IngestError::InvalidRecord {
                id: r.record.id.clone(),
                violations,
            });
        }
        serde_json::to_writer(&mut buf, r).expect("record serialisation cannot fail");
        buf.push(b'\n');
    }
    atomic_write(path, &buf).map_err(|e| IngestError::io(path, e))?;
    Ok(CorpusManifest {
        path: path.to_path_buf(),
        kind: CorpusKind::Records,
        count: records.len(),
        content_hash: sha256_hex(&buf),
    })
}

pub fn write_knowledge(path: &Path, entries: &[KnowledgeEntry]) -> Result<CorpusManifest, IngestError> {
    let kind = entries.first().map(|e| e.kind).unwrap_or(KnowledgeKind::Disease);
    let mut buf = Vec::new();
    for e in entries {
        let line = KnowledgeLine {
            name: e.name.clone(),
            aspects: e
                .aspects
                .iter()
                .map(|(k, v)| (k.as_str().to_string(), v.clone()))
                .collect(),
        };
        serde_json::to_writer(&mut buf, &line).expect("knowledge serialisation cannot fail");
        buf.push(b'\n');
    }
    atomic_write(path, &buf).map_err(|e| IngestError::io(path, e))?;
    Ok(CorpusManifest {
        path: path.to_path_buf(),
        kind: kind.into(),
        count: entries.len(),
        content_hash: sha256_hex(&buf),
    })
}
