//! Collects a run's JSON results and renders Markdown, CSV and SVG reports.

mod svg;
mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{DistributionReport, SelectionSummary};
use crate::eval::{GapReport, SegmentTable};
use crate::knowledge::AccuracyTable;
use crate::qa::PairStats;
use crate::sft::TrainManifest;
use crate::style::AlignmentTable;
use crate::util::atomic_write;

pub use svg::distribution_svg;
pub use tables::*;

pub const SELECTION_FILE: &str = "selection.json";
pub const QA_STATS_FILE: &str = "qa_stats.json";
pub const GAP_FILE: &str = "gap.json";
pub const WINRATE_FILE: &str = "winrate.json";
pub const STYLE_FILE: &str = "style.json";
pub const KNOWLEDGE_FILE: &str = "knowledge.json";
pub const MANIFEST_FILE: &str = "export/manifest.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no result files found in {0}")]
    MissingResult(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub summary: SelectionSummary,
    pub distributions: DistributionReport,
}

/// Whatever results a run directory holds. Stages that were not run stay `None`.
#[derive(Debug, Clone, Default)]
pub struct RunResults {
    pub selection: Option<SelectionResult>,
    pub qa_stats: Option<PairStats>,
    pub gap: Option<GapReport>,
    pub winrate: Option<Vec<SegmentTable>>,
    pub style: Option<AlignmentTable>,
    pub knowledge: Option<AccuracyTable>,
    pub manifest: Option<TrainManifest>,
}

fn read_opt<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>, ReportError> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map(Some).map_err(|source| ReportError::Json { path, source })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    atomic_write(path, text.as_bytes()).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

impl RunResults {
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        Ok(RunResults {
            selection: read_opt(dir, SELECTION_FILE)?,
            qa_stats: read_opt(dir, QA_STATS_FILE)?,
            gap: read_opt(dir, GAP_FILE)?,
            winrate: read_opt(dir, WINRATE_FILE)?,
            style: read_opt(dir, STYLE_FILE)?,
            knowledge: read_opt(dir, KNOWLEDGE_FILE)?,
            manifest: read_opt(dir, MANIFEST_FILE)?,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.selection.is_none()
            && self.qa_stats.is_none()
            && self.gap.is_none()
            && self.winrate.is_none()
            && self.style.is_none()
            && self.knowledge.is_none()
            && self.manifest.is_none()
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("# Run report\n");
        let mut section = |title: &str, body: String| {
            out.push_str(&format!("\n## {title}\n\n{body}"));
        };
        if let Some(s) = &self.selection {
            section("Role-model selection", selection_markdown(&s.summary, &s.distributions) + "\n![score distributions](distribution.svg)\n");
        }
        if let Some(q) = &self.qa_stats {
            section("Knowledge QA pairs", qa_markdown(q));
        }
        if let Some(m) = &self.manifest {
            section("Fine-tuning export", manifest_markdown(m));
        }
        if let Some(g) = &self.gap {
            section("Gap to human doctors", gap_markdown(g));
        }
        if let Some(w) = &self.winrate {
            section("Win rate by segment", w.iter().map(segment_markdown).collect::<Vec<_>>().join("\n"));
        }
        if let Some(s) = &self.style {
            section("Style alignment", alignment_markdown(s));
        }
        if let Some(k) = &self.knowledge {
            section("Knowledge accuracy", accuracy_markdown(k));
        }
        out
    }
}

/// Render every available result under `run_dir` into `out_dir`. Returns the
/// written paths.
pub fn render_report(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let results = RunResults::load(run_dir)?;
    if results.is_empty() {
        return Err(ReportError::MissingResult(run_dir.to_path_buf()));
    }
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io { path: out_dir.to_path_buf(), source })?;
    let mut files: Vec<(&str, String)> = vec![("report.md", results.markdown())];
    if let Some(s) = &results.selection {
        files.push(("distribution.svg", distribution_svg(&s.distributions)));
        files.push(("distribution.csv", distribution_csv(&s.distributions)));
    }
    if let Some(g) = &results.gap {
        files.push(("gap.csv", gap_csv(g)));
    }
    if let Some(w) = &results.winrate {
        files.push(("winrate.csv", segment_csv(w)));
    }
    if let Some(s) = &results.style {
        files.push(("style.csv", alignment_csv(s)));
    }
    if let Some(k) = &results.knowledge {
        files.push(("knowledge.csv", accuracy_csv(k)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        atomic_write(&path, body.as_bytes()).map_err(|source| ReportError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
