//! Stage orchestration over a run directory.
//!
//! Every stage reads its inputs from earlier stages' files in the run
//! directory when they exist (computing them otherwise) and writes its outputs
//! through temp-then-rename, so any stage can be rerun on its own.

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig, StageSpec};
use crate::converse::{simulate_stage, ConverseError, EndpointConverser, MockStage, ModelConverser};
use crate::curation::{distribution_report, select, CurationError};
use crate::eval::{
    gap_table, match_pairs, matched_sample, score_pairs, segment_win_rates, EvalError, GapReport, SegmentTable,
    Segmentation,
};
use crate::ingest::{load_knowledge, load_records, load_scored, CorpusManifest, IngestError, ParseMode};
use crate::judge::{BackendError, ChatEndpoint, HttpJudge, JudgeBackend, JudgeError, JudgeGateway, JudgeStats, MockJudge, ResponseCache};
use crate::knowledge::{
    evaluate_stage, sample_items, stage_comparison, AccuracyTable, AnswerSource, EndpointAnswers, KnowledgeError,
    MockAnswers, RecordedAnswers,
};
use crate::model::{ConsultationRecord, Department, KnowledgeKind, QAPair, ScoredRecord};
use crate::qa::{generate_pairs, pair_stats, PairStats, QaError, TemplateSet};
use crate::report::{self, render_report, ReportError, SelectionResult};
use crate::sft::{build_dataset, write_dataset, SftError, TrainManifest};
use crate::style::{alignment_table, AlignmentTable, StageRun, StyleError};
use crate::util::{derive_seed, read_jsonl, write_json, write_jsonl};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Curation(#[from] CurationError),
    #[error(transparent)]
    Sft(#[from] SftError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Style(#[from] StyleError),
    #[error(transparent)]
    Converse(#[from] ConverseError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl PipelineError {
    /// Stable identifier for machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Qa(_) => "qa",
            PipelineError::Judge(_) | PipelineError::Backend(_) => "judge",
            PipelineError::Curation(_) => "curation",
            PipelineError::Sft(_) => "sft_export",
            PipelineError::Eval(_) => "eval",
            PipelineError::Style(_) => "style",
            PipelineError::Converse(_) => "simulate",
            PipelineError::Knowledge(_) => "knowledge",
            PipelineError::Report(_) => "report",
            PipelineError::Io { .. } => "io",
            PipelineError::Usage(_) => "usage",
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const INGEST_FILE: &str = "ingest.json";
pub const QA_FILE: &str = "qa_pairs.jsonl";
pub const SCORED_FILE: &str = "scored.jsonl";
pub const SELECTED_FILE: &str = "selected.jsonl";
pub const SIM_DIR: &str = "simulated";
pub const BENCH_FILE: &str = "bench_samples.json";
pub const REPORT_DIR: &str = "report";
pub const RUN_LOG_FILE: &str = "run_log.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mock_judge: bool,
    pub mode: ParseMode,
    pub run_id: Option<String>,
}

/// Timestamped id used when none is given.
pub fn default_run_id() -> String {
    chrono::Local::now().format("%Y%m%dT%H%M%S").to_string()
}

pub fn build_judge(cfg: &PipelineConfig, force_mock: bool) -> Result<JudgeGateway> {
    let backend: Arc<dyn JudgeBackend> = match (&cfg.judge.endpoint, force_mock) {
        (Some(ep), false) => Arc::new(HttpJudge::new(ep.clone())?),
        _ => {
            let mut m = MockJudge::new();
            if let Some(p) = &cfg.paths.mock_fixtures {
                m = m.load_fixtures(p).map_err(io_err(p))?;
            }
            Arc::new(m)
        }
    };
    let cache = ResponseCache::on_disk(&cfg.paths.cache_dir).map_err(io_err(&cfg.paths.cache_dir))?;
    Ok(JudgeGateway::new(backend, cache, cfg.judge.clone()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: CorpusManifest,
    pub diseases: CorpusManifest,
    pub medicines: CorpusManifest,
    pub skipped_lines: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSamples {
    pub model_ids: Vec<String>,
    pub samples: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub run_id: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub judge: JudgeStats,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub judge: JudgeGateway,
    pub mode: ParseMode,
    pub run_id: String,
    pub run_dir: PathBuf,
    stages_run: Vec<String>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        let judge = build_judge(&cfg, opts.mock_judge)?;
        let run_id = opts.run_id.unwrap_or_else(default_run_id);
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(PipelineError::Usage(format!("invalid run id {run_id:?}")));
        }
        let run_dir = cfg.paths.out_dir.join(&run_id);
        std::fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
        Ok(Pipeline { cfg, judge, mode: opts.mode, run_id, run_dir, stages_run: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.seed, stage)
    }

    fn mark(&mut self, stage: &str) {
        log::info!("stage {stage} done");
        self.stages_run.push(stage.to_string());
    }

    fn save_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value).map_err(io_err(&p))
    }

    fn save_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<()> {
        let p = self.path(name);
        write_jsonl(&p, items).map_err(io_err(&p))
    }

    fn cached_jsonl<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<Option<Vec<T>>> {
        let p = self.path(name);
        if p.exists() {
            Ok(Some(read_jsonl(&p).map_err(io_err(&p))?))
        } else {
            Ok(None)
        }
    }

    // Record files go back through the corpus loader, which restores turn
    // indices and re-checks invariants.
    fn cached_records(&self, name: &str) -> Result<Option<Vec<ConsultationRecord>>> {
        let p = self.path(name);
        Ok(if p.exists() { Some(load_records(&p, ParseMode::Strict)?.items) } else { None })
    }

    fn cached_scored(&self, name: &str) -> Result<Option<Vec<ScoredRecord>>> {
        let p = self.path(name);
        Ok(if p.exists() { Some(load_scored(&p, ParseMode::Strict)?.items) } else { None })
    }

    /// Validate and normalise the input corpora; write the normalised records
    /// and a manifest of content hashes.
    pub fn ingest(&mut self) -> Result<IngestSummary> {
        let p = &self.cfg.paths;
        let recs = load_records(&p.records, self.mode)?;
        let dis = load_knowledge(&p.diseases, KnowledgeKind::Disease, self.mode)?;
        let med = load_knowledge(&p.medicines, KnowledgeKind::Medicine, self.mode)?;
        for e in recs.skipped.iter().chain(&dis.skipped).chain(&med.skipped) {
            log::warn!("skipped line {}: {}", e.line, e.cause);
        }
        let out = self.path(RECORDS_FILE);
        let summary = IngestSummary {
            records: crate::ingest::write_records(&out, &recs.items)?,
            diseases: CorpusManifest::for_file(&p.diseases, KnowledgeKind::Disease.into(), dis.items.len())?,
            medicines: CorpusManifest::for_file(&p.medicines, KnowledgeKind::Medicine.into(), med.items.len())?,
            skipped_lines: recs.skipped.len() + dis.skipped.len() + med.skipped.len(),
        };
        self.save_json(INGEST_FILE, &summary)?;
        self.mark("ingest");
        Ok(summary)
    }

    pub fn records(&mut self) -> Result<Vec<ConsultationRecord>> {
        if let Some(r) = self.cached_records(RECORDS_FILE)? {
            return Ok(r);
        }
        self.ingest()?;
        Ok(self.cached_records(RECORDS_FILE)?.expect("ingest wrote records"))
    }

    /// Fill in departments for records that have none.
    pub fn classify(&mut self) -> Result<Vec<ConsultationRecord>> {
        let records = self.records()?;
        let judge = &self.judge;
        let classified = judge
            .map(&records, |r| -> std::result::Result<ConsultationRecord, JudgeError> {
                let mut r = r.clone();
                if r.department == Department::Unclassified {
                    r.department = judge.classify_department(&r)?;
                }
                Ok(r)
            })
            .into_iter()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        crate::ingest::write_records(&self.path(RECORDS_FILE), &classified)?;
        self.mark("classify");
        Ok(classified)
    }

    fn templates(&self) -> Result<TemplateSet> {
        let t = match &self.cfg.paths.templates {
            Some(p) => TemplateSet::load(p)?,
            None => TemplateSet::default(),
        };
        Ok(t)
    }

    pub fn gen_qa(&mut self) -> Result<(Vec<QAPair>, PairStats)> {
        let p = &self.cfg.paths;
        let mut entries = load_knowledge(&p.diseases, KnowledgeKind::Disease, self.mode)?.items;
        entries.extend(load_knowledge(&p.medicines, KnowledgeKind::Medicine, self.mode)?.items);
        let pairs = generate_pairs(&entries, &self.templates()?)?;
        let stats = pair_stats(&pairs);
        self.save_jsonl(QA_FILE, &pairs)?;
        self.save_json(report::QA_STATS_FILE, &stats)?;
        self.mark("gen-qa");
        Ok((pairs, stats))
    }

    pub fn qa_pairs(&mut self) -> Result<Vec<QAPair>> {
        match self.cached_jsonl(QA_FILE)? {
            Some(p) => Ok(p),
            None => Ok(self.gen_qa()?.0),
        }
    }

    pub fn score(&mut self) -> Result<Vec<ScoredRecord>> {
        let records = self.records()?;
        let judge = &self.judge;
        let scored = judge
            .map(&records, |r| {
                judge.rate_soft_skills(r).map(|s| ScoredRecord { record: r.clone(), soft_skills: Some(s), eval_scores: None })
            })
            .into_iter()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        crate::ingest::write_scored(&self.path(SCORED_FILE), &scored)?;
        self.mark("score");
        Ok(scored)
    }

    pub fn select(&mut self) -> Result<SelectionResult> {
        let scored = match self.cached_scored(SCORED_FILE)? {
            Some(s) => s,
            None => self.score()?,
        };
        let before: Vec<_> = scored.iter().filter_map(|r| r.soft_skills).collect();
        let sel = select(scored, &self.cfg.selection)?;
        let after: Vec<_> = sel.kept.iter().filter_map(|r| r.soft_skills).collect();
        let result = SelectionResult { summary: sel.summary, distributions: distribution_report(&before, &after) };
        crate::ingest::write_scored(&self.path(SELECTED_FILE), &sel.kept)?;
        self.save_json(report::SELECTION_FILE, &result)?;
        self.mark("select");
        Ok(result)
    }

    pub fn export_sft(&mut self) -> Result<TrainManifest> {
        let kept = match self.cached_scored(SELECTED_FILE)? {
            Some(k) => k,
            None => {
                self.select()?;
                self.cached_scored(SELECTED_FILE)?.expect("select wrote kept records")
            }
        };
        let records: Vec<ConsultationRecord> = kept.into_iter().map(|s| s.record).collect();
        let pairs = self.qa_pairs()?;
        let ds = build_dataset(&records, &pairs, &self.cfg.export, self.seed("export"))?;
        let dir = self.path("export");
        write_dataset(&dir, &ds).map_err(io_err(&dir))?;
        self.mark("export-sft");
        Ok(ds.manifest)
    }

    /// Seed records for patient simulation: a seeded subset of the corpus, in
    /// corpus order.
    pub fn simulation_seeds(&mut self) -> Result<Vec<ConsultationRecord>> {
        let records = self.records()?;
        let n = self.cfg.eval.simulation_seeds.unwrap_or(records.len()).min(records.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed("simulation-seeds"));
        let mut idx = index::sample(&mut rng, records.len(), n).into_vec();
        idx.sort_unstable();
        Ok(idx.into_iter().map(|i| records[i].clone()).collect())
    }

    fn converser(spec: &StageSpec) -> Result<Box<dyn ModelConverser>> {
        if let Some(ep) = &spec.endpoint {
            return Ok(Box::new(EndpointConverser {
                name: spec.name.clone(),
                endpoint: ChatEndpoint::new(ep.clone())?,
                system_prompt: spec.system_prompt.clone(),
            }));
        }
        let m = spec.mock.as_ref().ok_or_else(|| PipelineError::Usage(format!("stage {} has neither mock nor endpoint", spec.name)))?;
        Ok(Box::new(MockStage::new(spec.name.clone(), m.fidelity, m.verbosity)))
    }

    fn sim_file(stage: &str) -> String {
        let safe: String = stage.chars().map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' }).collect();
        format!("{SIM_DIR}/{safe}.jsonl")
    }

    /// Simulated conversations for every configured stage.
    pub fn simulate(&mut self) -> Result<Vec<StageRun>> {
        let seeds = self.simulation_seeds()?;
        let mut runs = Vec::new();
        for spec in self.cfg.eval.stages.clone() {
            let c = Self::converser(&spec)?;
            let conversations = simulate_stage(&seeds, c.as_ref(), &self.judge)?;
            crate::ingest::write_records(&self.path(&Self::sim_file(&spec.name)), &conversations)?;
            runs.push(StageRun { name: spec.name.clone(), conversations });
        }
        self.mark("simulate");
        Ok(runs)
    }

    fn stage_runs(&mut self) -> Result<Vec<StageRun>> {
        let mut runs = Vec::new();
        for spec in &self.cfg.eval.stages {
            match self.cached_records(&Self::sim_file(&spec.name))? {
                Some(conversations) => runs.push(StageRun { name: spec.name.clone(), conversations }),
                None => return self.simulate(),
            }
        }
        Ok(runs)
    }

    pub fn style(&mut self) -> Result<AlignmentTable> {
        let seeds = self.simulation_seeds()?;
        let runs = self.stage_runs()?;
        let table = alignment_table(&seeds, &runs, self.cfg.eval.ngram_mode)?;
        self.save_json(report::STYLE_FILE, &table)?;
        self.mark("style");
        Ok(table)
    }

    /// Human pool for benchmarks, excluding the simulation seeds.
    fn human_pool(&mut self) -> Result<Vec<ConsultationRecord>> {
        let seeds: BTreeSet<String> = self.simulation_seeds()?.into_iter().map(|r| r.id).collect();
        let pool = if self.cfg.paths.human_pool.is_some() {
            load_records(self.cfg.paths.human_pool(), self.mode)?.items
        } else {
            self.records()?
        };
        Ok(pool.into_iter().filter(|r| !seeds.contains(&r.id)).collect())
    }

    /// The final stage's conversations are the model corpus under evaluation.
    fn model_corpus(&mut self) -> Result<Vec<ConsultationRecord>> {
        self.stage_runs()?
            .pop()
            .map(|r| r.conversations)
            .ok_or_else(|| PipelineError::Usage("no model stages configured".into()))
    }

    fn rate(&self, records: &[ConsultationRecord]) -> Result<Vec<ScoredRecord>> {
        let judge = &self.judge;
        Ok(judge
            .map(records, |r| {
                judge.rate_eval_metrics(r).map(|s| ScoredRecord { record: r.clone(), soft_skills: None, eval_scores: Some(s) })
            })
            .into_iter()
            .collect::<std::result::Result<Vec<_>, _>>()?)
    }

    pub fn bench(&mut self) -> Result<GapReport> {
        let model = self.model_corpus()?;
        let pool = self.human_pool()?;
        let samples = matched_sample(&model, &pool, self.cfg.eval.repeats, self.seed("bench"))?;
        let model_scores: Vec<_> = self.rate(&model)?.into_iter().filter_map(|s| s.eval_scores).collect();
        let human_scores = samples
            .iter()
            .map(|s| Ok(self.rate(&s.records)?.into_iter().filter_map(|s| s.eval_scores).collect()))
            .collect::<Result<Vec<Vec<_>>>>()?;
        let report = gap_table(&model_scores, &human_scores)?;
        let ids = BenchSamples {
            model_ids: model.iter().map(|r| r.id.clone()).collect(),
            samples: samples.iter().map(|s| s.records.iter().map(|r| r.id.clone()).collect()).collect(),
        };
        self.save_json(BENCH_FILE, &ids)?;
        self.save_json(report::GAP_FILE, &report)?;
        self.mark("bench");
        Ok(report)
    }

    pub fn winrate(&mut self) -> Result<Vec<SegmentTable>> {
        let model = self.model_corpus()?;
        let pool = self.human_pool()?;
        let pairs = match_pairs(&model, &pool, self.seed("winrate"))?;
        let wanted: BTreeSet<&str> = pairs.iter().map(|p| p.human_record_id.as_str()).collect();
        let humans: Vec<ConsultationRecord> = pool.iter().filter(|r| wanted.contains(r.id.as_str())).cloned().collect();
        let scored = score_pairs(&pairs, &self.rate(&model)?, &self.rate(&humans)?)?;
        let tables: Vec<SegmentTable> = Segmentation::ALL.iter().map(|&s| segment_win_rates(&scored, s)).collect();
        self.save_json(report::WINRATE_FILE, &tables)?;
        self.mark("winrate");
        Ok(tables)
    }

    fn answer_source(spec: &StageSpec) -> Result<Box<dyn AnswerSource>> {
        if let Some(p) = &spec.answers {
            return Ok(Box::new(RecordedAnswers::load(p)?));
        }
        if let Some(ep) = &spec.endpoint {
            return Ok(Box::new(EndpointAnswers { endpoint: ChatEndpoint::new(ep.clone())?, system_prompt: spec.system_prompt.clone() }));
        }
        let m = spec.mock.as_ref().ok_or_else(|| PipelineError::Usage(format!("stage {} has no answer source", spec.name)))?;
        Ok(Box::new(MockAnswers { stage: spec.name.clone(), accuracy: m.accuracy }))
    }

    pub fn knowledge(&mut self) -> Result<AccuracyTable> {
        let pairs = self.qa_pairs()?;
        let e = self.cfg.eval.clone();
        let items = sample_items(&pairs, e.knowledge_items.unwrap_or(pairs.len()), self.seed("knowledge"), e.kind_proportions)?;
        let rows = e
            .stages
            .iter()
            .map(|spec| Ok(evaluate_stage(&spec.name, &items, Self::answer_source(spec)?.as_ref(), &self.judge)?))
            .collect::<Result<Vec<_>>>()?;
        let table = stage_comparison(rows)?;
        self.save_json(report::KNOWLEDGE_FILE, &table)?;
        self.mark("knowledge");
        Ok(table)
    }

    pub fn report(&mut self) -> Result<Vec<PathBuf>> {
        let out = render_report(&self.run_dir, &self.path(REPORT_DIR))?;
        self.mark("report");
        Ok(out)
    }

    /// Every stage in order, then the run log.
    pub fn run_all(&mut self) -> Result<RunLog> {
        self.ingest()?;
        self.classify()?;
        self.gen_qa()?;
        self.score()?;
        self.select()?;
        self.export_sft()?;
        self.simulate()?;
        self.style()?;
        self.bench()?;
        self.winrate()?;
        self.knowledge()?;
        self.report()?;
        self.write_run_log()
    }

    /// Judge statistics live here, outside the report, so reports stay
    /// byte-identical between cold and warm runs.
    pub fn write_run_log(&self) -> Result<RunLog> {
        let log = RunLog {
            run_id: self.run_id.clone(),
            seed: self.cfg.seed,
            stages: self.stages_run.clone(),
            judge: self.judge.stats(),
        };
        self.save_json(RUN_LOG_FILE, &log)?;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{write_fixtures, SynthSizes};

    fn setup(dir: &Path) -> PipelineConfig {
        let paths = write_fixtures(dir, 11, SynthSizes { records: 120, diseases: 10, medicines: 10 }).unwrap();
        PipelineConfig::load(&paths[3]).unwrap()
    }

    fn opts(id: &str) -> RunOptions {
        RunOptions { mock_judge: true, mode: ParseMode::Strict, run_id: Some(id.into()) }
    }

    #[test]
    fn stages_resume_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path());
        let mut p = Pipeline::new(cfg, opts("r1")).unwrap();
        let m = p.export_sft().unwrap();
        assert!(p.path("export/train.jsonl").exists());
        assert!(p.path(SELECTED_FILE).exists());
        assert_eq!(m.mix.knowledge, p.qa_pairs().unwrap().len());
        let before = p.judge.stats().upstream_calls;
        p.export_sft().unwrap();
        assert_eq!(p.judge.stats().upstream_calls, before);
    }

    #[test]
    fn bad_run_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path());
        assert!(matches!(Pipeline::new(cfg, opts("../x")), Err(PipelineError::Usage(_))));
    }

    #[test]
    fn stage_without_source_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path());
        cfg.eval.stages[0].mock = None;
        let err = Pipeline::new(cfg, opts("r2")).err().unwrap();
        assert_eq!(err.code(), "config");
    }
}
