//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with the mock judge and the bundled fixtures. Exits non-zero if any
//! criterion fails; every criterion runs regardless.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use statrs::distribution::{ContinuousCDF, StudentsT};

use medsft::config::PipelineConfig;
use medsft::converse::{simulate_stage, MockStage};
use medsft::curation::{select, select_mask, Combine, SelectionPolicy};
use medsft::eval::{
    gap_table_from_means, match_pairs, matched_sample, matched_sample_indices, score_pairs, segment_win_rates, win_rate,
    EvalError, GapRow, Metric, ScoredPair, Segmentation,
};
use medsft::ingest::{load_knowledge, load_records, ParseMode};
use medsft::judge::JudgeGateway;
use medsft::knowledge::Count;
use medsft::model::{Department, Role};
use medsft::pipeline::{Pipeline, RunOptions, REPORT_DIR};
use medsft::qa::{generate_pairs, pair_stats, TemplateSet};
use medsft::sft::{build_dataset, example_to_turns, record_to_example, validate_file, write_dataset, ChatRole, ExportSettings, SFTExample};
use medsft::style::{alignment_table, paired_ttest, significance_stars, NgramMode, StageRun};
use medsft::model::ScoredRecord;
use medsft::{ConsultationRecord, EvalScores, KnowledgeEntry, KnowledgeKind, SoftSkillScores};

// Tolerances.
const GAP_TOL: f64 = 0.01;
const ACCURACY_TOL: f64 = 0.05;
const STYLE_TOL: f64 = 1e-9;
const TTEST_TOL: f64 = 1e-6;
const UNIFORM_KEPT: (f64, f64) = (0.105, 0.145);

type Outcome = Result<(), String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture_records() -> Vec<ConsultationRecord> {
    load_records(&fixtures().join("records.jsonl"), ParseMode::Strict).unwrap().items
}

fn fixture_knowledge() -> Vec<KnowledgeEntry> {
    let mut e = load_knowledge(&fixtures().join("diseases.jsonl"), KnowledgeKind::Disease, ParseMode::Strict).unwrap().items;
    e.extend(load_knowledge(&fixtures().join("medicines.jsonl"), KnowledgeKind::Medicine, ParseMode::Strict).unwrap().items);
    e
}

// 1 ---------------------------------------------------------------------

fn gap_arithmetic() -> Outcome {
    let model = [87.5, 82.7, 85.1, 84.0, 85.8, 84.9, 85.0];
    let samples = [
        [89.2, 85.7, 87.4, 86.1, 88.2, 87.2, 87.3],
        [89.2, 85.8, 87.5, 86.2, 88.3, 87.2, 87.3],
        [89.0, 85.6, 87.3, 85.9, 88.1, 87.0, 87.2],
    ];
    let printed = [
        [-1.91, -3.50, -2.63, -2.44, -2.72, -2.64, -2.63],
        [-1.91, -3.61, -2.74, -2.55, -2.83, -2.64, -2.63],
        [-1.69, -3.39, -2.52, -2.21, -2.61, -2.41, -2.52],
    ];
    let report = gap_table_from_means(model, 1, &samples.map(|s| (1000, s))).map_err(|e| e.to_string())?;
    let mut bad = String::new();
    for (s, row_vals) in printed.iter().enumerate() {
        for row in GapRow::ALL {
            let got = report.gap(s, row);
            let want = row_vals[row as usize];
            if (got - want).abs() > GAP_TOL {
                let _ = write!(bad, " sample {} {}: {got} vs {want};", s + 1, row.label());
            }
        }
    }
    check!(bad.is_empty(), "gap mismatch:{bad}");
    Ok(())
}

// 2 ---------------------------------------------------------------------

fn accuracy_arithmetic() -> Outcome {
    let cases = [(19404, 20000, 97.0), (8223, 13029, 63.1), (3089, 6971, 44.3), (5985, 6971, 85.8)];
    let mut bad = String::new();
    for (c, t, want) in cases {
        let count = Count { correct: c, total: t };
        // Unrounded percentage against the printed one-decimal figure.
        let exact = count.rate();
        if (exact - want).abs() > ACCURACY_TOL {
            let _ = write!(bad, " {c}/{t} = {exact:.4}% (reported {:.1}), printed {want}, off by {:.4};", count.percent(), (exact - want).abs());
        }
    }
    check!(bad.is_empty(), "{}", bad.trim());
    Ok(())
}

// 3 ---------------------------------------------------------------------

fn nearest_rank(mut col: Vec<f64>, q: f64) -> f64 {
    col.sort_by(f64::total_cmp);
    // Exact rank: ceil(q * n) for q = 1/2, computed in integers.
    assert_eq!(q, 0.5);
    let rank = col.len().div_ceil(2).max(1);
    col[rank - 1]
}

fn scored(i: usize, s: [f64; 3]) -> ScoredRecord {
    let mut r = ConsultationRecord::new(
        format!("r{i}"),
        Department::Others,
        vec![medsft::Turn::patient("hi"), medsft::Turn::doctor("hello")],
    );
    r.reindex();
    ScoredRecord { record: r, soft_skills: Some(SoftSkillScores::from_array(s)), eval_scores: None }
}

fn kept_fraction(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> f64 {
    let scores: Vec<SoftSkillScores> = (0..n)
        .map(|_| {
            let shared: f64 = rng.random();
            SoftSkillScores::from_array(std::array::from_fn(|_| {
                let own: f64 = rng.random();
                100.0 * (rho * shared + (1.0 - rho) * own)
            }))
        })
        .collect();
    let policy = SelectionPolicy { quantile: 0.5, combine: Combine::AllDims };
    let (mask, _) = select_mask(&scores, &policy).unwrap();
    mask.iter().filter(|k| **k).count() as f64 / n as f64
}

fn selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..4 {
        // Integer scores on odd trials force ties at the thresholds.
        let records: Vec<ScoredRecord> = (0..1000)
            .map(|i| {
                let s = std::array::from_fn(|_| {
                    let v: f64 = rng.random_range(0.0..100.0);
                    if trial % 2 == 1 { v.floor() } else { v }
                });
                scored(i, s)
            })
            .collect();
        let cols: Vec<Vec<f64>> = (0..3).map(|k| records.iter().map(|r| r.soft_skills.unwrap().as_array()[k]).collect()).collect();
        let th: Vec<f64> = cols.into_iter().map(|c| nearest_rank(c, 0.5)).collect();
        let expect: Vec<String> = records
            .iter()
            .filter(|r| r.soft_skills.unwrap().as_array().iter().zip(&th).all(|(v, t)| v >= t))
            .map(|r| r.record.id.clone())
            .collect();
        let sel = select(records, &SelectionPolicy { quantile: 0.5, combine: Combine::AllDims }).map_err(|e| e.to_string())?;
        let got: Vec<String> = sel.kept.iter().map(|r| r.record.id.clone()).collect();
        check!(got == expect, "trial {trial}: select kept {} records, brute force {}", got.len(), expect.len());
        check!(sel.summary.thresholds.to_vec() == th, "trial {trial}: thresholds differ");
    }

    let runs = 20;
    let uniform: f64 = (0..runs).map(|_| kept_fraction(&mut rng, 2000, 0.0)).sum::<f64>() / runs as f64;
    check!(
        (UNIFORM_KEPT.0..=UNIFORM_KEPT.1).contains(&uniform),
        "independent scores kept {uniform:.4}, outside {UNIFORM_KEPT:?}"
    );
    let mut last = uniform;
    let mut trail = format!("{uniform:.3}");
    for rho in [0.5, 0.8, 0.95, 0.99] {
        let f: f64 = (0..runs).map(|_| kept_fraction(&mut rng, 2000, rho)).sum::<f64>() / runs as f64;
        let _ = write!(trail, " -> {f:.3}");
        check!(f > last, "kept fraction did not rise with correlation: {trail}");
        last = f;
    }
    check!(last > 0.4 && last <= 0.5 + 1e-9, "strongly correlated scores kept {last:.3}: {trail}");
    Ok(())
}

// 4 ---------------------------------------------------------------------

struct OracleFeatures {
    rounds: f64,
    wpr: f64,
    qratio: f64,
    pattern: Vec<bool>,
    bigrams: usize,
    trigrams: usize,
    tokens: usize,
    ttr: f64,
}

struct StyleOracle {
    token: Regex,
    sentence: Regex,
}

impl StyleOracle {
    fn new() -> Self {
        let cjk = r"\x{3400}-\x{4DBF}\x{4E00}-\x{9FFF}\x{F900}-\x{FAFF}\x{20000}-\x{2A6DF}\x{2A700}-\x{2EBEF}\x{2F800}-\x{2FA1F}\x{30000}-\x{3134F}\x{3040}-\x{309F}\x{30A0}-\x{30FF}\x{AC00}-\x{D7AF}";
        StyleOracle {
            token: Regex::new(&format!(r"[{cjk}]|[[\p{{Alphabetic}}\p{{N}}]--[{cjk}]]+")).unwrap(),
            sentence: Regex::new(r"([^。！？.!?]*)([。！？.!?]*)").unwrap(),
        }
    }

    fn features(&self, r: &ConsultationRecord) -> OracleFeatures {
        let doctor: Vec<&str> = r.turns.iter().filter(|t| t.role == Role::Doctor).map(|t| t.text.as_str()).collect();
        let mut all = Vec::new();
        let mut bi = HashSet::new();
        let mut tri = HashSet::new();
        let (mut sentences, mut questions) = (0, 0);
        let mut pattern = Vec::new();
        for d in &doctor {
            let toks: Vec<&str> = self.token.find_iter(d).map(|m| m.as_str()).collect();
            for i in 0..toks.len() {
                if i + 1 < toks.len() {
                    bi.insert(format!("{}\u{0}{}", toks[i], toks[i + 1]));
                }
                if i + 2 < toks.len() {
                    tri.insert(format!("{}\u{0}{}\u{0}{}", toks[i], toks[i + 1], toks[i + 2]));
                }
            }
            all.extend(toks);
            for c in self.sentence.captures_iter(d) {
                if c[1].trim().is_empty() {
                    continue;
                }
                sentences += 1;
                if c[2].contains(['?', '？']) {
                    questions += 1;
                }
            }
            pattern.push(d.contains(['?', '？']));
        }
        let distinct: HashSet<&str> = all.iter().copied().collect();
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        OracleFeatures {
            rounds: doctor.len() as f64,
            wpr: div(all.len() as f64, doctor.len() as f64),
            qratio: div(questions as f64, sentences as f64),
            pattern,
            bigrams: bi.len(),
            trigrams: tri.len(),
            tokens: all.len(),
            ttr: div(distinct.len() as f64, all.len() as f64),
        }
    }

    fn deviation(&self, m: &ConsultationRecord, h: &ConsultationRecord, mode: NgramMode) -> [f64; 7] {
        let (a, b) = (self.features(m), self.features(h));
        let ng = |x: usize, f: &OracleFeatures| match mode {
            NgramMode::Count => x as f64,
            NgramMode::PerThousandTokens => if f.tokens == 0 { 0.0 } else { 1000.0 * x as f64 / f.tokens as f64 },
        };
        let k = a.pattern.len().min(b.pattern.len());
        let mism = if k == 0 { 0.0 } else { (0..k).filter(|&i| a.pattern[i] != b.pattern[i]).count() as f64 / k as f64 };
        [
            (a.rounds - b.rounds).abs(),
            (a.wpr - b.wpr).abs(),
            (a.qratio - b.qratio).abs(),
            mism,
            (ng(a.bigrams, &a) - ng(b.bigrams, &b)).abs(),
            (ng(a.trigrams, &a) - ng(b.trigrams, &b)).abs(),
            (a.ttr - b.ttr).abs(),
        ]
    }
}

fn style_self_alignment() -> Outcome {
    // Self-distance over arbitrary corpora.
    let turn_text = "[a-zA-Z ]{0,12}[?.!。？]?[\u{4e00}-\u{4e10}]{0,3}[a-z ?]{1,10}";
    let record = proptest::collection::vec((turn_text, turn_text), 1..6).prop_map(|rounds| {
        let turns = rounds.into_iter().flat_map(|(p, d)| [medsft::Turn::patient(format!("p {p}")), medsft::Turn::doctor(format!("d {d}"))]).collect();
        ConsultationRecord::new("x", Department::Others, turns)
    });
    let corpus = proptest::collection::vec(record, 2..12);
    let mut runner = TestRunner::new(PtConfig { cases: 64, failure_persistence: None, ..PtConfig::default() });
    runner
        .run(&corpus, |corpus| {
            for mode in [NgramMode::Count, NgramMode::PerThousandTokens] {
                let stage = StageRun { name: "self".into(), conversations: corpus.clone() };
                let t = alignment_table(&corpus, &[stage], mode).unwrap();
                for row in &t.rows {
                    prop_assert_eq!(row.distances[0], 0.0, "{:?}", row.feature);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("self-alignment: {e}"))?;

    // Fixture distances against the brute-force oracle.
    let records = fixture_records();
    let seeds: Vec<_> = records.iter().step_by(5).cloned().collect();
    let judge = JudgeGateway::mock();
    let stages: Vec<StageRun> = PipelineConfig::default()
        .eval
        .stages
        .iter()
        .map(|s| {
            let m = s.mock.as_ref().unwrap();
            let c = MockStage::new(s.name.clone(), m.fidelity, m.verbosity);
            StageRun { name: s.name.clone(), conversations: simulate_stage(&seeds, &c, &judge).unwrap() }
        })
        .collect();
    let oracle = StyleOracle::new();
    for mode in [NgramMode::Count, NgramMode::PerThousandTokens] {
        let table = alignment_table(&seeds, &stages, mode).map_err(|e| e.to_string())?;
        for (k, stage) in stages.iter().enumerate() {
            let devs: Vec<[f64; 7]> = stage.conversations.iter().zip(&seeds).map(|(m, h)| oracle.deviation(m, h, mode)).collect();
            for (f, row) in table.rows.iter().enumerate() {
                let want = devs.iter().map(|d| d[f]).sum::<f64>() / devs.len() as f64;
                let got = row.distances[k];
                check!((got - want).abs() <= STYLE_TOL, "{mode:?} {} {:?}: {got} vs oracle {want}", stage.name, row.feature);
            }
        }
        let self_table = alignment_table(&seeds, &[StageRun { name: "h".into(), conversations: seeds.clone() }], mode).unwrap();
        check!(self_table.rows.iter().all(|r| r.distances[0] == 0.0), "fixture self-distance non-zero");
    }
    Ok(())
}

// 5 ---------------------------------------------------------------------

fn ttest_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let n = rng.random_range(3..=200);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let shift = rng.random_range(-1.0..1.0);
        let b: Vec<f64> = a.iter().map(|x| x + shift + rng.random_range(-3.0..3.0)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t_ref = mean / (var.sqrt() / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let p_ref = 2.0 * (1.0 - dist.cdf(t_ref.abs()));
        let got = paired_ttest(&a, &b).map_err(|e| e.to_string())?;
        check!((got.t - t_ref).abs() <= TTEST_TOL, "case {case} (n={n}): t {} vs {t_ref}", got.t);
        check!((got.p - p_ref).abs() <= TTEST_TOL, "case {case} (n={n}): p {} vs {p_ref}", got.p);
    }
    let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0; 3]).map_err(|e| e.to_string())?;
    check!((r.t - 3.464).abs() < 1e-3 && (r.p - 0.0742).abs() < 1e-4, "delta (1,2,3): t={} p={}", r.t, r.p);
    let stars = [(0.0099, "***"), (0.01, "**"), (0.0499, "**"), (0.05, "*"), (0.0999, "*"), (0.1, ""), (0.5, "")];
    for (p, want) in stars {
        check!(significance_stars(p) == want, "stars({p}) = {:?}, want {want:?}", significance_stars(p));
    }
    Ok(())
}

// 6 ---------------------------------------------------------------------

fn matched_sampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let depts = &Department::CLASSIFIED;
    let count = |v: &[Department]| -> BTreeMap<Department, usize> {
        let mut m = BTreeMap::new();
        for d in v {
            *m.entry(*d).or_default() += 1;
        }
        m
    };
    for case in 0..200 {
        let k = rng.random_range(1..=depts.len());
        let model: Vec<Department> = (0..rng.random_range(1..60)).map(|_| depts[rng.random_range(0..k)]).collect();
        let ample = case % 2 == 0;
        let pool: Vec<Department> = if ample {
            (0..2000).map(|_| depts[rng.random_range(0..k)]).collect()
        } else {
            (0..rng.random_range(0..80)).map(|_| depts[rng.random_range(0..k)]).collect()
        };
        let need = count(&model);
        let have = count(&pool);
        let short = need.iter().any(|(d, n)| have.get(d).copied().unwrap_or(0) < *n);
        match matched_sample_indices(&model, &pool, 3, rng.random()) {
            Err(EvalError::InsufficientPool { department, need: n, have: h }) => {
                check!(short, "case {case}: InsufficientPool for {department} but pool suffices");
                check!(need[&department] == n && have.get(&department).copied().unwrap_or(0) == h, "case {case}: wrong shortfall");
            }
            Err(e) => return Err(format!("case {case}: unexpected {e}")),
            Ok(samples) => {
                check!(!short, "case {case}: pool is short but sampling succeeded");
                for s in &samples {
                    let got = count(&s.iter().map(|&i| pool[i]).collect::<Vec<_>>());
                    check!(got == need, "case {case}: department counts differ");
                    check!(s.iter().collect::<HashSet<_>>().len() == s.len(), "case {case}: duplicate index in a sample");
                }
                if ample && model.len() >= 10 {
                    check!(samples[0] != samples[1] && samples[1] != samples[2] && samples[0] != samples[2], "case {case}: repeats identical");
                }
            }
        }
    }
    let records = fixture_records();
    let (model, pool) = records.split_at(40);
    let samples = matched_sample(model, pool, 3, 1).map_err(|e| e.to_string())?;
    let md: Vec<Department> = model.iter().map(|r| r.department).collect();
    for s in samples {
        let sd: Vec<Department> = s.records.iter().map(|r| r.department).collect();
        check!(count(&sd) == count(&md), "fixture sample {} department counts differ", s.index);
    }
    Ok(())
}

// 7 ---------------------------------------------------------------------

fn fixture_pairs() -> Vec<ScoredPair> {
    let records = fixture_records();
    let judge = JudgeGateway::mock();
    let (model, pool) = records.split_at(30);
    let pairs = match_pairs(model, pool, 7).unwrap();
    let rate = |rs: &[ConsultationRecord]| -> Vec<ScoredRecord> {
        rs.iter()
            .map(|r| ScoredRecord { record: r.clone(), soft_skills: None, eval_scores: Some(judge.rate_eval_metrics(r).unwrap()) })
            .collect()
    };
    score_pairs(&pairs, &rate(model), &rate(pool)).unwrap()
}

fn win_rate_duality() -> Outcome {
    let pairs = fixture_pairs();
    let reversed: Vec<ScoredPair> = pairs.iter().map(ScoredPair::reversed).collect();
    let mut groups: Vec<(String, Vec<ScoredPair>)> = vec![("all".into(), pairs.clone())];
    for seg in Segmentation::ALL {
        for s in seg.segments() {
            let members: Vec<ScoredPair> = pairs.iter().filter(|p| seg.segment_of(p) == Some(s)).cloned().collect();
            if !members.is_empty() {
                groups.push((format!("{}/{s}", seg.key()), members));
            }
        }
    }
    for (name, g) in &groups {
        let rev: Vec<ScoredPair> = g.iter().map(ScoredPair::reversed).collect();
        for m in Metric::ALL {
            let ge = win_rate(g, m).unwrap();
            let gt_rev = rev.iter().filter(|p| m.value(&p.model) > m.value(&p.human)).count();
            check!(ge.wins + gt_rev == g.len(), "{name} {m:?}: {} + {gt_rev} != {}", ge.wins, g.len());
            let sum = ge.percent() + 100.0 * gt_rev as f64 / g.len() as f64;
            check!(format!("{sum:.2}") == "100.00", "{name} {m:?}: rates sum to {sum:.2}%");
        }
    }
    check!(reversed.len() == pairs.len(), "reversal changed pair count");

    let ties: Vec<ScoredPair> = pairs
        .iter()
        .map(|p| ScoredPair { human: p.model, ..p.clone() })
        .collect();
    for m in Metric::ALL {
        let w = win_rate(&ties, m).unwrap();
        check!(w.to_string() == "100.00%", "all-ties {m:?}: {w}");
    }
    for seg in Segmentation::ALL {
        let t = segment_win_rates(&ties, seg);
        check!(t.rows.iter().all(|r| r.rates.iter().all(|w| w.to_string() == "100.00%")), "all-ties segment {}", seg.key());
    }
    let flat = EvalScores::new(70.0, 70.0, 70.0, 70.0);
    let all_equal: Vec<ScoredPair> = pairs.iter().map(|p| ScoredPair { model: flat, human: flat, ..p.clone() }).collect();
    check!(win_rate(&all_equal, Metric::Overall).unwrap().to_string() == "100.00%", "constant scores");
    Ok(())
}

// 8 ---------------------------------------------------------------------

fn qa_generation() -> Outcome {
    let entries = fixture_knowledge();
    let pairs = generate_pairs(&entries, &TemplateSet::default()).map_err(|e| e.to_string())?;
    let expected: usize = entries.iter().map(|e| e.aspects.len()).sum();
    check!(pairs.len() == expected, "{} pairs for {expected} present aspects", pairs.len());
    for p in &pairs {
        check!(p.question.contains(&p.source_name), "question {:?} lacks {:?}", p.question, p.source_name);
        let entry = entries.iter().find(|e| e.name == p.source_name && e.kind == p.kind).ok_or("pair without entry")?;
        check!(entry.aspects.get(&p.aspect) == Some(&p.answer), "answer for {} {:?} differs from source", p.source_name, p.aspect);
    }
    let stats = pair_stats(&pairs);
    let mut by_kind: BTreeMap<KnowledgeKind, usize> = BTreeMap::new();
    let mut by_aspect = BTreeMap::new();
    for e in &entries {
        for a in e.aspects.keys() {
            *by_kind.entry(e.kind).or_default() += 1;
            *by_aspect.entry(*a).or_insert(0usize) += 1;
        }
    }
    fn nonzero<K: Copy + Ord>(m: &BTreeMap<K, usize>) -> Vec<(K, usize)> {
        m.iter().filter(|(_, v)| **v > 0).map(|(k, v)| (*k, *v)).collect()
    }
    check!(stats.total == expected, "stats total {}", stats.total);
    check!(nonzero(&stats.by_kind) == nonzero(&by_kind), "by-kind counts differ");
    check!(nonzero(&stats.by_aspect) == nonzero(&by_aspect), "by-aspect counts differ");
    Ok(())
}

// 9 ---------------------------------------------------------------------

fn sft_export() -> Outcome {
    let records = fixture_records();
    let pairs = generate_pairs(&fixture_knowledge(), &TemplateSet::default()).unwrap();
    let settings = ExportSettings { system_prompt: "You are a doctor.".into(), ..ExportSettings::default() };
    for r in &records {
        let back = example_to_turns(&record_to_example(r, &settings.system_prompt));
        let a: Vec<(Role, &str)> = back.iter().map(|t| (t.role, t.text.as_str())).collect();
        let b: Vec<(Role, &str)> = r.turns.iter().map(|t| (t.role, t.text.as_str())).collect();
        check!(a == b, "record {} does not round-trip", r.id);
    }
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let ds = build_dataset(&records, &pairs, &settings, 99).map_err(|e| e.to_string())?;
        write_dataset(d.path(), &ds).map_err(|e| e.to_string())?;
    }
    let originals: HashSet<Vec<String>> = records.iter().map(|r| r.turns.iter().map(|t| t.text.clone()).collect()).collect();
    let mut total = 0;
    for name in ["train.jsonl", "val.jsonl", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        check!(a == b, "{name} differs between runs with one seed");
        if name.ends_with(".jsonl") {
            total += validate_file(&dirs[0].path().join(name)).map_err(|e| format!("{name}: {e}"))?;
            for line in String::from_utf8(a).unwrap().lines() {
                let ex: SFTExample = serde_json::from_str(line).unwrap();
                let roles: Vec<ChatRole> = ex.messages.iter().map(|m| m.role).filter(|r| *r != ChatRole::System).collect();
                let alternating = roles.iter().enumerate().all(|(i, r)| *r == if i % 2 == 0 { ChatRole::User } else { ChatRole::Assistant });
                check!(alternating && roles.len() % 2 == 0 && !roles.is_empty(), "{name}: roles not alternating");
                if ex.tags.contains("source:conversation") {
                    let texts: Vec<String> = example_to_turns(&ex).into_iter().map(|t| t.text).collect();
                    check!(originals.contains(&texts), "{name}: conversation example not traceable to a record");
                }
            }
        }
    }
    check!(total == records.len() + pairs.len(), "{total} examples written, expected {}", records.len() + pairs.len());
    Ok(())
}

// 10 --------------------------------------------------------------------

fn copy_fixtures(to: &Path) {
    for f in ["records.jsonl", "diseases.jsonl", "medicines.jsonl", "pipeline.toml"] {
        std::fs::copy(fixtures().join(f), to.join(f)).unwrap();
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
    }
    out
}

fn pipeline_determinism() -> Outcome {
    let work = tempfile::tempdir().unwrap();
    copy_fixtures(work.path());
    let run = |id: &str| {
        let cfg = PipelineConfig::load(&work.path().join("pipeline.toml")).unwrap();
        let mut p = Pipeline::new(cfg, RunOptions { mock_judge: true, mode: ParseMode::Strict, run_id: Some(id.into()) }).unwrap();
        let log = p.run_all().map_err(|e| e.to_string())?;
        Ok::<_, String>((log, p.path(REPORT_DIR)))
    };
    let (cold, a) = run("cold")?;
    let (warm, b) = run("warm")?;
    check!(cold.judge.upstream_calls > 0, "cold run made no judge calls");
    check!(warm.judge.upstream_calls == 0, "warm run made {} upstream judge calls", warm.judge.upstream_calls);
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    check!(ta.len() >= 7, "only {} report files", ta.len());
    check!(ta.keys().eq(tb.keys()), "report file sets differ");
    for (name, bytes) in &ta {
        check!(tb[name] == *bytes, "report file {name} differs between runs");
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gap arithmetic", gap_arithmetic),
        ("accuracy arithmetic", accuracy_arithmetic),
        ("selection oracle", selection_oracle),
        ("style self-alignment", style_self_alignment),
        ("paired t-test oracle", ttest_oracle),
        ("matched sampling", matched_sampling),
        ("win-rate duality and ties", win_rate_duality),
        ("QA generation", qa_generation),
        ("SFT export", sft_export),
        ("pipeline determinism and caching", pipeline_determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(()) => println!("criterion {:>2} {name}: PASS", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL - {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
