//! Before/after soft-skill score histograms as a standalone SVG.

use std::fmt::Write;

use crate::curation::DistributionReport;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 36.0;
const BEFORE: &str = "#9aa5b1";
const AFTER: &str = "#2f6db5";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel per skill, bars normalised to each histogram's own total so the
/// two distributions are comparable in shape.
pub fn distribution_svg(report: &DistributionReport) -> String {
    let panels = report.skills.len().max(1) as f64;
    let width = panels * PANEL_W;
    let height = PANEL_H + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, skill) in report.skills.iter().enumerate() {
        let x0 = p as f64 * PANEL_W + MARGIN;
        let plot_w = PANEL_W - 1.5 * MARGIN;
        let plot_h = PANEL_H - 2.0 * MARGIN;
        let base_y = MARGIN + plot_h;
        let frac = |counts: &[usize], n: usize| -> Vec<f64> {
            counts.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect()
        };
        let before = frac(&skill.before.counts, skill.before.n);
        let after = frac(&skill.after.counts, skill.after.n);
        let peak = before.iter().chain(&after).cloned().fold(0.0_f64, f64::max).max(1e-9);
        let bins = before.len().max(1) as f64;
        let bin_w = plot_w / bins;

        let _ = writeln!(out, r#"<g class="panel" data-skill="{}">"#, esc(&skill.skill));
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-weight="bold">{}</text>"#, x0, MARGIN - 12.0, esc(&skill.skill));
        let _ = writeln!(
            out,
            r##"<line x1="{x0:.2}" y1="{base_y:.2}" x2="{:.2}" y2="{base_y:.2}" stroke="#333"/>"##,
            x0 + plot_w
        );
        for (i, (b, a)) in before.iter().zip(&after).enumerate() {
            let x = x0 + i as f64 * bin_w;
            let hb = b / peak * plot_h;
            let ha = a / peak * plot_h;
            let half = bin_w / 2.0;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{half:.2}" height="{hb:.2}" fill="{BEFORE}"/>"#,
                base_y - hb
            );
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{half:.2}" height="{ha:.2}" fill="{AFTER}"/>"#,
                x + half,
                base_y - ha
            );
        }
        for tick in (0..=100).step_by(25) {
            let x = x0 + tick as f64 / 100.0 * plot_w;
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#, base_y + 14.0);
        }
        let _ = writeln!(out, "</g>");
    }
    let ly = PANEL_H + 12.0;
    let _ = writeln!(out, r#"<rect x="{MARGIN:.2}" y="{:.2}" width="10" height="10" fill="{BEFORE}"/>"#, ly - 9.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">all records</text>"#, MARGIN + 14.0);
    let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{AFTER}"/>"#, MARGIN + 100.0, ly - 9.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">selected</text>"#, MARGIN + 114.0);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::distribution_report;
    use crate::model::SoftSkillScores;

    #[test]
    fn three_panels_forty_bars_each() {
        let before: Vec<_> = (0..50).map(|i| SoftSkillScores::new(i as f64 * 2.0, 50.0, 99.0)).collect();
        let after = before[25..].to_vec();
        let svg = distribution_svg(&distribution_report(&before, &after));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="panel""#).count(), 3);
        assert_eq!(svg.matches(&format!(r#"fill="{BEFORE}"/>"#)).count(), 3 * 20 + 1);
        assert_eq!(svg, distribution_svg(&distribution_report(&before, &after)));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_selection_renders() {
        let before = vec![SoftSkillScores::new(10.0, 20.0, 30.0)];
        let svg = distribution_svg(&distribution_report(&before, &[]));
        assert!(!svg.contains("NaN"));
    }
}
