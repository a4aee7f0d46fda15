//! Pipeline configuration (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::SelectionPolicy;
use crate::judge::{EndpointConfig, JudgeSettings};
use crate::knowledge::KindProportions;
use crate::sft::ExportSettings;
use crate::style::NgramMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub records: PathBuf,
    pub diseases: PathBuf,
    pub medicines: PathBuf,
    /// Human records the benchmarks draw from; defaults to `records`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_pool: Option<PathBuf>,
    /// Question templates overlaid on the built-in set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    /// Canned replies for the mock judge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            records: "records.jsonl".into(),
            diseases: "diseases.jsonl".into(),
            medicines: "medicines.jsonl".into(),
            human_pool: None,
            templates: None,
            mock_fixtures: None,
            cache_dir: ".medsft-cache".into(),
            out_dir: "runs".into(),
        }
    }
}

impl Paths {
    /// Make every relative path relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.records);
        fix(&mut self.diseases);
        fix(&mut self.medicines);
        fix(&mut self.cache_dir);
        fix(&mut self.out_dir);
        for p in [&mut self.human_pool, &mut self.templates, &mut self.mock_fixtures].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn human_pool(&self) -> &Path {
        self.human_pool.as_deref().unwrap_or(&self.records)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockStageSpec {
    /// Chance of reusing the human doctor's turn.
    pub fidelity: f64,
    /// Body sentences in a generic reply.
    pub verbosity: usize,
    /// Share of knowledge questions answered with the reference.
    pub accuracy: f64,
}

/// One model stage compared in the style and knowledge evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockStageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub system_prompt: String,
    /// Recorded knowledge answers; used instead of querying the stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<PathBuf>,
}

impl StageSpec {
    pub fn mock(name: &str, fidelity: f64, verbosity: usize, accuracy: f64) -> Self {
        StageSpec {
            name: name.to_string(),
            mock: Some(MockStageSpec { fidelity, verbosity, accuracy }),
            endpoint: None,
            system_prompt: String::new(),
            answers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Independent human benchmark samples.
    pub repeats: usize,
    /// Knowledge items to sample; all pairs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knowledge_items: Option<usize>,
    pub kind_proportions: KindProportions,
    pub ngram_mode: NgramMode,
    /// Seed records used for simulation; all records when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation_seeds: Option<usize>,
    /// Stages in tuning order. The last one is the model benchmarked
    /// against humans.
    pub stages: Vec<StageSpec>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            repeats: 3,
            knowledge_items: None,
            kind_proportions: KindProportions::default(),
            ngram_mode: NgramMode::Count,
            simulation_seeds: None,
            stages: vec![
                StageSpec::mock("base", 0.05, 4, 0.97),
                StageSpec::mock("base+conversations", 0.75, 1, 0.57),
                StageSpec::mock("base+conversations+qa", 0.7, 1, 0.9),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub judge: JudgeSettings,
    pub selection: SelectionPolicy,
    pub export: ExportSettings,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20240101,
            paths: Paths::default(),
            judge: JudgeSettings::default(),
            selection: SelectionPolicy::default(),
            export: ExportSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text)?;
        cfg.paths.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.selection.validate().map_err(|e| ConfigError::Invalid(format!("selection: {e}")))?;
        self.export.validate().map_err(|e| ConfigError::Invalid(format!("export: {e}")))?;
        if self.seed > i64::MAX as u64 {
            return invalid(format!("seed {} does not fit a TOML integer", self.seed));
        }
        let j = &self.judge;
        if j.max_in_flight == 0 {
            return invalid("judge.max_in_flight must be at least 1".into());
        }
        if j.max_rounds == 0 {
            return invalid("judge.max_rounds must be at least 1".into());
        }
        let e = &self.eval;
        if e.repeats == 0 {
            return invalid("eval.repeats must be at least 1".into());
        }
        let p = e.kind_proportions;
        if p.disease < 0.0 || p.medicine < 0.0 || (p.disease + p.medicine - 1.0).abs() > 1e-9 {
            return invalid(format!("eval.kind_proportions must sum to 1, got {}+{}", p.disease, p.medicine));
        }
        if e.stages.is_empty() {
            return invalid("eval.stages is empty".into());
        }
        let mut names = BTreeSet::new();
        for s in &e.stages {
            if s.name.trim().is_empty() || !names.insert(s.name.as_str()) {
                return invalid(format!("stage name {:?} is empty or repeated", s.name));
            }
            match (&s.mock, &s.endpoint) {
                (Some(_), Some(_)) => return invalid(format!("stage {}: set either mock or endpoint", s.name)),
                (None, None) => return invalid(format!("stage {}: needs mock or endpoint", s.name)),
                (Some(m), None) => {
                    if !(0.0..=1.0).contains(&m.fidelity) || !(0.0..=1.0).contains(&m.accuracy) {
                        return invalid(format!("stage {}: fidelity and accuracy must be in [0,1]", s.name));
                    }
                }
                (None, Some(_)) => {}
            }
        }
        Ok(())
    }
}
