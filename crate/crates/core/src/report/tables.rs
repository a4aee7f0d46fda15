//! Markdown and CSV renderings. All output is a pure function of its input.

use std::fmt::Write;

use crate::curation::{Combine, DistributionReport, SelectionSummary};
use crate::eval::{GapReport, GapRow, Metric, SegmentTable};
use crate::knowledge::AccuracyTable;
use crate::model::SoftSkillScores;
use crate::qa::PairStats;
use crate::sft::TrainManifest;
use crate::style::AlignmentTable;

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_rule(n: usize) -> String {
    format!("|{}\n", "---|".repeat(n))
}

fn csv_row(cells: &[String]) -> String {
    let quoted: Vec<String> = cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        })
        .collect();
    format!("{}\n", quoted.join(","))
}

fn pct2(v: f64) -> String {
    format!("{v:.2}%")
}

pub fn gap_markdown(r: &GapReport) -> String {
    let mut head = vec!["Evaluation Metrics".to_string(), "Model Score".to_string()];
    for i in 1..=r.samples.len() {
        head.push(format!("Sample {i} Score"));
        head.push(format!("Sample {i} Gap(Δ%)"));
    }
    let mut out = md_row(&head) + &md_rule(head.len());
    for (i, row) in GapRow::ALL.iter().enumerate() {
        let label = if row.is_composite() { format!("*{}*", row.label()) } else { row.label().to_string() };
        let mut cells = vec![label, format!("{:.1}", r.model[i])];
        for s in &r.samples {
            cells.push(format!("{:.1}", s.means[i]));
            cells.push(pct2(s.gaps[i]));
        }
        out += &md_row(&cells);
    }
    let mut cells = vec!["Number of entities".to_string(), r.model_n.to_string()];
    for s in &r.samples {
        cells.push(s.n.to_string());
        cells.push("-".into());
    }
    out += &md_row(&cells);
    out
}

pub fn gap_csv(r: &GapReport) -> String {
    let mut head = vec!["metric".to_string(), "model_score".to_string()];
    for i in 1..=r.samples.len() {
        head.push(format!("sample{i}_score"));
        head.push(format!("sample{i}_gap_pct"));
    }
    let mut out = csv_row(&head);
    for (i, row) in GapRow::ALL.iter().enumerate() {
        let mut cells = vec![row.label().to_string(), format!("{:.1}", r.model[i])];
        for s in &r.samples {
            cells.push(format!("{:.1}", s.means[i]));
            cells.push(format!("{:.2}", s.gaps[i]));
        }
        out += &csv_row(&cells);
    }
    out
}

pub fn segment_markdown(t: &SegmentTable) -> String {
    let mut out = format!("### {}\n\n", t.segmentation.label());
    let mut head = vec!["Segment".to_string(), "Pairs".to_string()];
    head.extend(Metric::ALL.iter().map(|m| m.label().to_string()));
    out += &md_row(&head);
    out += &md_rule(head.len());
    for r in &t.rows {
        let mut cells = vec![r.segment.clone(), r.n.to_string()];
        cells.extend(r.rates.iter().map(|w| pct2(w.percent())));
        out += &md_row(&cells);
    }
    let mut notes = Vec::new();
    if !t.omitted.is_empty() {
        notes.push(format!("No matched pairs in: {}.", t.omitted.join(", ")));
    }
    if t.unassigned > 0 {
        notes.push(format!("{} of {} pairs lack the metadata for this breakdown.", t.unassigned, t.total));
    }
    if !notes.is_empty() {
        out += "\n";
        for n in notes {
            out += &format!("_{n}_\n");
        }
    }
    out
}

pub fn segment_csv(tables: &[SegmentTable]) -> String {
    let mut head = vec!["segmentation".to_string(), "segment".to_string(), "pairs".to_string()];
    head.extend(Metric::ALL.iter().map(|m| format!("{m:?}").to_lowercase()));
    let mut out = csv_row(&head);
    for t in tables {
        for r in &t.rows {
            let mut cells = vec![t.segmentation.key().to_string(), r.segment.clone(), r.n.to_string()];
            cells.extend(r.rates.iter().map(|w| format!("{:.2}", w.percent())));
            out += &csv_row(&cells);
        }
    }
    out
}

fn signed(v: f64, decimals: usize) -> String {
    if v == 0.0 {
        format!("{:.*}", decimals, 0.0)
    } else {
        format!("{v:+.decimals$}")
    }
}

fn t_value(t: f64) -> String {
    if t.is_infinite() {
        if t > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{t:.4}")
    }
}

pub fn alignment_markdown(t: &AlignmentTable) -> String {
    let mut head = vec!["Feature".to_string()];
    head.extend(t.stages.iter().map(|s| format!("Distance: {s}")));
    head.extend(t.stages.windows(2).map(|w| format!("Shortened {} → {}", w[0], w[1])));
    let mut out = md_row(&head) + &md_rule(head.len());
    for r in &t.rows {
        let mut cells = vec![r.feature.label().to_string()];
        cells.extend(r.distances.iter().map(|d| format!("{d:.2}")));
        cells.extend(r.transitions.iter().map(|x| format!("{}{}", signed(x.mean_diff, 2), x.stars())));
        out += &md_row(&cells);
    }
    out += &format!("\n_Paired t-test over N = {} seed records. *** p<0.01, ** p<0.05, * p<0.1._\n", t.n);
    out
}

pub fn alignment_csv(t: &AlignmentTable) -> String {
    let mut out = csv_row(&["feature", "from_stage", "to_stage", "distance_from", "distance_to", "shortened", "t", "p", "stars", "n"].map(String::from));
    for r in &t.rows {
        for (k, x) in r.transitions.iter().enumerate() {
            out += &csv_row(&[
                r.feature.label().to_string(),
                t.stages[k].clone(),
                t.stages[k + 1].clone(),
                format!("{:.6}", r.distances[k]),
                format!("{:.6}", r.distances[k + 1]),
                format!("{:.6}", x.mean_diff),
                t_value(x.t),
                format!("{:.6}", x.p),
                x.stars().to_string(),
                x.n.to_string(),
            ]);
        }
        if r.transitions.is_empty() {
            out += &csv_row(&[
                r.feature.label().to_string(),
                t.stages[0].clone(),
                String::new(),
                format!("{:.6}", r.distances[0]),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                t.n.to_string(),
            ]);
        }
    }
    out
}

pub fn accuracy_markdown(t: &AccuracyTable) -> String {
    let mut head = vec![String::new()];
    head.extend(t.rows.iter().map(|r| r.stage.clone()));
    head.extend(t.rows.windows(2).map(|w| format!("Δ {} → {}", w[0].stage, w[1].stage)));
    let mut out = md_row(&head) + &md_rule(head.len());
    let first = &t.rows[0];
    let labels = [
        format!("All questions ({})", first.overall().total),
        format!("Diseases knowledge ({})", first.disease.total),
        format!("Medicine information ({})", first.medicine.total),
    ];
    for (i, label) in labels.into_iter().enumerate() {
        let mut cells = vec![label];
        for r in &t.rows {
            let c = [r.overall(), r.disease, r.medicine][i];
            cells.push(format!("{} ({:.1}%)", c.correct, c.percent()));
        }
        cells.extend(t.deltas.iter().map(|d| signed(d[i], 1)));
        out += &md_row(&cells);
    }
    let missing: Vec<String> = t.rows.iter().filter(|r| r.missing > 0).map(|r| format!("{} ({})", r.stage, r.missing)).collect();
    if !missing.is_empty() {
        out += &format!("\n_Unanswered items counted as incorrect: {}._\n", missing.join(", "));
    }
    out
}

pub fn accuracy_csv(t: &AccuracyTable) -> String {
    let mut out = csv_row(&["stage", "category", "correct", "total", "percent"].map(String::from));
    for r in &t.rows {
        for (name, c) in [("all", r.overall()), ("disease", r.disease), ("medicine", r.medicine)] {
            out += &csv_row(&[r.stage.clone(), name.into(), c.correct.to_string(), c.total.to_string(), format!("{:.1}", c.percent())]);
        }
    }
    out
}

pub fn selection_markdown(s: &SelectionSummary, d: &DistributionReport) -> String {
    let mut out = String::new();
    let combine = match s.policy.combine {
        Combine::AllDims => "every skill",
        Combine::MeanDim => "mean skill",
    };
    let _ = writeln!(out, "Policy: quantile {} on {combine}.", s.policy.quantile);
    let _ = writeln!(out, "Kept {} of {} records ({:.1}%).\n", s.kept, s.input, 100.0 * s.retention());
    let head = ["Skill", "Threshold", "Mean before", "Mean after"].map(String::from);
    out += &md_row(&head);
    out += &md_rule(head.len());
    let mean = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.1}"));
    for (i, skill) in d.skills.iter().enumerate() {
        out += &md_row(&[
            SoftSkillScores::FIELDS[i].to_string(),
            format!("{:.1}", s.thresholds[i]),
            mean(skill.before.mean),
            mean(skill.after.mean),
        ]);
    }
    out
}

pub fn distribution_csv(d: &DistributionReport) -> String {
    let mut out = csv_row(&["skill", "bin_start", "bin_end", "before", "after"].map(String::from));
    for s in &d.skills {
        for (i, (b, a)) in s.before.counts.iter().zip(&s.after.counts).enumerate() {
            out += &csv_row(&[s.skill.clone(), (i * 5).to_string(), (i * 5 + 5).to_string(), b.to_string(), a.to_string()]);
        }
    }
    out
}

pub fn qa_markdown(s: &PairStats) -> String {
    let mut out = format!("Total pairs: {}\n\n", s.total);
    out += &md_row(&["Aspect".to_string(), "Kind".to_string(), "Pairs".to_string()]);
    out += &md_rule(3);
    for (a, n) in &s.by_aspect {
        out += &md_row(&[a.as_str().to_string(), a.kind().as_str().to_string(), n.to_string()]);
    }
    out
}

pub fn manifest_markdown(m: &TrainManifest) -> String {
    let mut out = md_row(&["Setting".to_string(), "Value".to_string()]) + &md_rule(2);
    let rows = [
        ("global batch size", m.global_batch_size.to_string()),
        ("learning rate", format!("{:e}", m.learning_rate)),
        ("optimizer", m.optimizer.clone()),
        ("max sequence length", m.max_seq_len_tokens.to_string()),
        ("epochs", m.epochs.to_string()),
        ("adapter", m.adapter.clone()),
        ("conversation examples", m.mix.conversation.to_string()),
        ("knowledge examples", m.mix.knowledge.to_string()),
        ("split seed", m.split_seed.to_string()),
    ];
    for (k, v) in rows {
        out += &md_row(&[k.to_string(), v]);
    }
    for (name, n) in &m.splits {
        out += &md_row(&[format!("{name} examples"), n.to_string()]);
    }
    out
}
