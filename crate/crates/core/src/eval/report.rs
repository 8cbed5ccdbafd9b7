use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::class::ElementClass;

use super::dataset::QueryType;
use super::run::{QueryOutcome, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub question: String,
    pub expected: String,
    pub got: String,
    pub stage: Stage,
}

/// Accuracies are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub intent_accuracy: f64,
    pub qa_accuracy: f64,
    pub overall_accuracy: f64,
    /// Row = gold label, column = predicted label, both in `ElementClass::ALL`
    /// order.
    pub confusion: Vec<Vec<usize>>,
    /// Per gold label, queries the router did not assign to any label.
    pub unrouted: Vec<usize>,
    pub gold_counts: Vec<usize>,
    /// QA accuracy per query type; only types that occur are listed.
    pub per_type_accuracy: BTreeMap<QueryType, f64>,
    pub per_type_counts: BTreeMap<QueryType, usize>,
    pub failures: Vec<Failure>,
    /// Queries on which a backend or table load failed.
    pub errors: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_outcomes(outcomes: &[QueryOutcome]) -> Self {
        let n_labels = ElementClass::ALL.len();
        let mut confusion = vec![vec![0usize; n_labels]; n_labels];
        let mut unrouted = vec![0usize; n_labels];
        let mut gold_counts = vec![0usize; n_labels];
        let mut by_type: BTreeMap<QueryType, (usize, usize)> = BTreeMap::new();
        let mut failures = Vec::new();
        let (mut intent_ok, mut qa_ok, mut overall_ok, mut errors) = (0, 0, 0, 0);

        for o in outcomes {
            let g = o.gold_label.index();
            gold_counts[g] += 1;
            match o.predicted_label {
                Some(p) => confusion[g][p.index()] += 1,
                None => unrouted[g] += 1,
            }
            intent_ok += o.intent_correct as usize;
            qa_ok += o.qa_correct as usize;
            overall_ok += o.overall_correct as usize;
            errors += !o.errors.is_empty() as usize;
            if let Some(t) = o.query_type {
                let e = by_type.entry(t).or_default();
                e.0 += o.qa_correct as usize;
                e.1 += 1;
            }
            if !o.intent_correct {
                failures.push(Failure {
                    question: o.question.clone(),
                    expected: o.gold_label.to_string(),
                    got: o
                        .predicted_label
                        .map_or("none".to_string(), |p| p.to_string()),
                    stage: Stage::Intent,
                });
            }
            if !o.qa_correct {
                failures.push(Failure {
                    question: o.question.clone(),
                    expected: o.expected.clone(),
                    got: o.got_qa.clone(),
                    stage: Stage::Qa,
                });
            }
            if o.intent_correct && o.qa_correct && !o.overall_correct {
                failures.push(Failure {
                    question: o.question.clone(),
                    expected: o.expected.clone(),
                    got: o.got_end_to_end.clone(),
                    stage: Stage::EndToEnd,
                });
            }
        }

        let n = outcomes.len();
        EvalReport {
            n_queries: n,
            intent_accuracy: ratio(intent_ok, n),
            qa_accuracy: ratio(qa_ok, n),
            overall_accuracy: ratio(overall_ok, n),
            confusion,
            unrouted,
            gold_counts,
            per_type_accuracy: by_type
                .iter()
                .map(|(t, &(ok, n))| (*t, ratio(ok, n)))
                .collect(),
            per_type_counts: by_type.iter().map(|(t, &(_, n))| (*t, n)).collect(),
            failures,
            errors,
        }
    }

    pub fn row_sum(&self, gold: ElementClass) -> usize {
        self.confusion[gold.index()].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Intent => "intent",
        Stage::Qa => "qa",
        Stage::EndToEnd => "end_to_end",
    }
}

fn markdown(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report\n");
    let _ = writeln!(out, "| metric | value |\n|---|---|");
    let _ = writeln!(out, "| queries | {} |", r.n_queries);
    let _ = writeln!(out, "| intent accuracy | {} |", pct(r.intent_accuracy));
    let _ = writeln!(out, "| table QA accuracy | {} |", pct(r.qa_accuracy));
    let _ = writeln!(out, "| overall accuracy | {} |", pct(r.overall_accuracy));
    let _ = writeln!(out, "| errors | {} |", r.errors);

    let _ = writeln!(out, "\n## Confusion matrix\n");
    let _ = writeln!(out, "Rows are gold labels, columns are predicted labels.\n");
    let mut header = String::from("| gold \\ predicted |");
    let mut rule = String::from("|---|");
    for c in ElementClass::ALL {
        let _ = write!(header, " {c} |");
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{header} unrouted | total |\n{rule}---|---|");
    for g in ElementClass::ALL {
        let row = &r.confusion[g.index()];
        let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(
            out,
            "| {g} | {} | {} | {} |",
            cells.join(" | "),
            r.unrouted[g.index()],
            r.gold_counts[g.index()]
        );
    }

    if !r.per_type_accuracy.is_empty() {
        let _ = writeln!(out, "\n## Accuracy by query type\n");
        let _ = writeln!(
            out,
            "| query type | queries | table QA accuracy |\n|---|---|---|"
        );
        for (t, acc) in &r.per_type_accuracy {
            let _ = writeln!(out, "| {t} | {} | {} |", r.per_type_counts[t], pct(*acc));
        }
    }

    if !r.failures.is_empty() {
        let _ = writeln!(out, "\n## Failures\n");
        let _ = writeln!(
            out,
            "| stage | question | expected | got |\n|---|---|---|---|"
        );
        for f in &r.failures {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                stage_name(f.stage),
                md_cell(&f.question),
                md_cell(&f.expected),
                md_cell(&f.got)
            );
        }
    }
    out
}

fn csv_text(r: &EvalReport) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut row = |a: &str, b: &str, c: &str| w.write_record([a, b, c]).expect("in-memory write");
    row("section", "key", "value");
    row("metric", "n_queries", &r.n_queries.to_string());
    row("metric", "intent_accuracy", &r.intent_accuracy.to_string());
    row("metric", "qa_accuracy", &r.qa_accuracy.to_string());
    row(
        "metric",
        "overall_accuracy",
        &r.overall_accuracy.to_string(),
    );
    row("metric", "errors", &r.errors.to_string());
    for g in ElementClass::ALL {
        for p in ElementClass::ALL {
            row(
                "confusion",
                &format!("{g}->{p}"),
                &r.confusion[g.index()][p.index()].to_string(),
            );
        }
        row("unrouted", g.as_str(), &r.unrouted[g.index()].to_string());
        row(
            "gold_total",
            g.as_str(),
            &r.gold_counts[g.index()].to_string(),
        );
    }
    for (t, acc) in &r.per_type_accuracy {
        row("per_type_accuracy", t.as_str(), &acc.to_string());
    }
    for f in &r.failures {
        row(
            &format!("failure_{}", stage_name(f.stage)),
            &f.question,
            &f.got,
        );
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::Markdown => markdown(report),
        ReportFormat::Csv => csv_text(report),
    }
}
