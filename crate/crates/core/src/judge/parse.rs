//! Tolerant parsers for judge replies.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{JudgeError, PatientTurn, Verdict};
use crate::model::Department;

fn key_number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"([A-Za-z][A-Za-z _\-]*?)\s*[:=：]\s*\**\s*(-?\d+(?:\.\d+)?)")
            .expect("static regex")
    })
}

fn normalize_key(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Pull `key: number` pairs for each of `keys` out of free text. The first
/// occurrence of a key wins. Every key must be present and every value must
/// lie in [0,100].
pub fn scan_scores(reply: &str, keys: &[&str]) -> Result<Vec<f64>, JudgeError> {
    let mut found: HashMap<String, f64> = HashMap::new();
    for cap in key_number_re().captures_iter(reply) {
        let key = normalize_key(&cap[1]);
        // "overall emotional support" style prefixes: match on suffix too
        let matched = keys
            .iter()
            .find(|k| key == **k || key.ends_with(&format!("_{k}")));
        if let (Some(k), Ok(v)) = (matched, cap[2].parse::<f64>()) {
            found.entry(k.to_string()).or_insert(v);
        }
    }
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        match found.get(*k) {
            Some(v) => out.push(*v),
            None => {
                return Err(JudgeError::UnparseableScore {
                    reply: reply.to_string(),
                })
            }
        }
    }
    for (k, v) in keys.iter().zip(&out) {
        if !(0.0..=100.0).contains(v) {
            return Err(JudgeError::OutOfRange {
                field: k.to_string(),
                value: *v,
            });
        }
    }
    Ok(out)
}

/// Keyword rule: "incorrect" / "not correct" wins over "correct".
pub fn parse_verdict(reply: &str) -> Result<Verdict, JudgeError> {
    let lower = reply.to_lowercase();
    if lower.contains("incorrect") || lower.contains("not correct") {
        Ok(Verdict::Incorrect)
    } else if lower.contains("correct") {
        Ok(Verdict::Correct)
    } else {
        Err(JudgeError::UnparseableVerdict {
            reply: reply.to_string(),
        })
    }
}

pub const END_MARKER: &str = "END";

pub fn parse_patient_reply(reply: &str) -> Result<PatientTurn, JudgeError> {
    let t = reply.trim();
    if t.is_empty() {
        return Err(JudgeError::UnparseableReply {
            reply: reply.to_string(),
        });
    }
    let bare = t.trim_matches(|c| matches!(c, '[' | ']' | '<' | '>'));
    if bare == END_MARKER {
        Ok(PatientTurn::End)
    } else {
        Ok(PatientTurn::Utterance(t.to_string()))
    }
}

/// First non-empty line, minus an optional `department:` prefix.
pub fn parse_department(reply: &str) -> Department {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let label = match line.split_once([':', '：']) {
        Some((head, tail)) if head.trim().eq_ignore_ascii_case("department") => tail,
        _ => line,
    };
    match Department::from_label(label) {
        Department::Unclassified => Department::Others,
        d => d,
    }
}
