//! Treatment tables (rows = inference-time treatments, columns = metrics)
//! and training-run summaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::dataset::Dataset;
use crate::error::Result;
use crate::flow::{FlowSpec, Variant};
use crate::policy::FlowPolicies;
use crate::rollout::RolloutStats;
use crate::train::evaluate::{evaluate, EvalFlags, EvalReport};
use crate::train::trainer::MetricsRecord;

pub const ZERO_PAIR_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentRow {
    pub label: String,
    pub report: EvalReport,
}

pub fn treatment_label(flags: EvalFlags) -> String {
    match (flags.enforce_grounded, flags.pairwise) {
        (false, false) => "greedy".into(),
        (true, false) => "+enforce grounded".into(),
        (false, true) => "+pairwise".into(),
        (true, true) => "+enforce grounded +pairwise".into(),
    }
}

/// Every treatment combination that applies to the dataset's variant.
pub fn treatment_rows(dataset: &Dataset, flow: &FlowSpec, policies: &FlowPolicies) -> Result<Vec<TreatmentRow>> {
    let mut combos = vec![EvalFlags::default(), EvalFlags { enforce_grounded: true, pairwise: false }];
    if flow.variant == Variant::Full {
        combos.push(EvalFlags { enforce_grounded: false, pairwise: true });
        combos.push(EvalFlags { enforce_grounded: true, pairwise: true });
    }
    combos
        .into_iter()
        .map(|flags| Ok(TreatmentRow { label: treatment_label(flags), report: evaluate(dataset, flow, policies, flags)? }))
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.3}"))
}

fn cells(r: &EvalReport) -> [String; 4] {
    [format!("{:.3}", r.answer_f1), format!("{:.3}", r.support_f1), fmt_opt(r.sufficiency_acc), format!("{:.3}", r.off_document_fraction)]
}

const HEADERS: [&str; 5] = ["treatment", "ans_f1", "supp_f1", "suff_acc", "off_doc"];

pub fn render_text(rows: &[TreatmentRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| std::iter::once(r.label.clone()).chain(cells(&r.report)).collect())
        .collect();
    let widths: Vec<usize> = (0..HEADERS.len())
        .map(|c| body.iter().map(|row| row[c].len()).chain([HEADERS[c].len()]).max().unwrap())
        .collect();
    let mut out = String::new();
    let line = |cols: Vec<String>, out: &mut String| {
        let parts: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(HEADERS.iter().map(|s| s.to_string()).collect(), &mut out);
    line(widths.iter().map(|w| "-".repeat(*w)).collect(), &mut out);
    for row in body {
        line(row, &mut out);
    }
    out
}

pub fn render_csv(rows: &[TreatmentRow]) -> String {
    let mut out = HEADERS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{}", r.label, cells(&r.report).join(","));
    }
    out
}

/// Fraction of the first `window` episodes whose rollouts produced no pair.
pub fn zero_pair_fraction(rollouts: &[RolloutStats], window: usize) -> f64 {
    let head = &rollouts[..window.min(rollouts.len())];
    if head.is_empty() {
        return 0.0;
    }
    head.iter().filter(|s| s.pairs_emitted == 0).count() as f64 / head.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub episodes: usize,
    pub zero_pair_fraction: f64,
    pub final_pv_answer_f1: Option<f64>,
    pub final_pv_support_f1: Option<f64>,
}

pub fn summarize_run(label: &str, metrics: &[MetricsRecord], rollouts: &[RolloutStats]) -> RunSummary {
    RunSummary {
        label: label.into(),
        episodes: rollouts.len(),
        zero_pair_fraction: zero_pair_fraction(rollouts, ZERO_PAIR_WINDOW),
        final_pv_answer_f1: metrics.last().map(|m| m.pv_answer_f1),
        final_pv_support_f1: metrics.last().map(|m| m.pv_support_f1),
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    let metrics: Vec<MetricsRecord> = read_jsonl(&dir.join("metrics.jsonl"))?;
    let rollouts: Vec<RolloutStats> = read_jsonl(&dir.join("rollouts.jsonl"))?;
    let label = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(summarize_run(&label, &metrics, &rollouts))
}

/// Run table plus, for two or more runs, the zero-pair ratio of each run
/// against the first.
pub fn render_runs(runs: &[RunSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>8} {:>14} {:>10} {:>10}", "run", "episodes", "zero_pair@100", "pv_ans_f1", "pv_supp_f1");
    for r in runs {
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>14.3} {:>10} {:>10}",
            r.label,
            r.episodes,
            r.zero_pair_fraction,
            fmt_opt(r.final_pv_answer_f1),
            fmt_opt(r.final_pv_support_f1)
        );
    }
    if let Some((base, rest)) = runs.split_first() {
        for r in rest {
            let ratio = if base.zero_pair_fraction > 0.0 {
                format!("{:.2}x", r.zero_pair_fraction / base.zero_pair_fraction)
            } else if r.zero_pair_fraction > 0.0 {
                "inf".into()
            } else {
                "n/a".into()
            };
            let _ = writeln!(
                out,
                "zero-pair episodes in first {ZERO_PAIR_WINDOW}: {} {:.3} vs {} {:.3} ({ratio})",
                r.label, r.zero_pair_fraction, base.label, base.zero_pair_fraction
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, a: f64) -> TreatmentRow {
        TreatmentRow {
            label: label.into(),
            report: EvalReport {
                episodes: 4,
                answer_f1: a,
                support_f1: 0.5,
                sufficiency_acc: None,
                off_document_fraction: 0.25,
                pairs_exactly_one: None,
                flags: EvalFlags::default(),
            },
        }
    }

    #[test]
    fn text_and_csv_shapes() {
        let rows = [row("greedy", 0.1), row("+enforce grounded", 0.125)];
        let text = render_text(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("+enforce grounded"));
        assert!(lines[2].contains("0.100"));
        let csv = render_csv(&rows);
        assert_eq!(csv.lines().nth(1).unwrap(), "greedy,0.100,0.500,-,0.250");
    }

    #[test]
    fn zero_pair_window() {
        let s = |p| RolloutStats { pairs_emitted: p, ..Default::default() };
        let r: Vec<_> = [0, 1, 0, 2].into_iter().map(s).collect();
        assert_eq!(zero_pair_fraction(&r, 100), 0.5);
        assert_eq!(zero_pair_fraction(&r, 1), 1.0);
        assert_eq!(zero_pair_fraction(&[], 100), 0.0);
    }
}
