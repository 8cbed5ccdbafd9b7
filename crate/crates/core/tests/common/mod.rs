#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::path::{Path, PathBuf};

use bimqa_core::eval::QueryOutcome;
use bimqa_core::ifc::Strictness;
use bimqa_core::pipeline::extract_file;
use bimqa_core::table::write_model_dir;
use bimqa_core::ElementClass;
use serde::Deserialize;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

/// Extract an IFC fixture into a fresh temporary directory.
pub fn extracted(ifc: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    let ex = extract_file(&fixture(ifc), Strictness::Strict).expect("fixture extracts");
    write_model_dir(&ex.tables, dir.path()).expect("tables written");
    dir
}

/// One row of a transcribed per-query result table.
#[derive(Deserialize)]
pub struct CaseRow {
    pub question: String,
    pub table_label: ElementClass,
    pub query_type: bimqa_core::eval::QueryType,
    pub intent: bool,
    pub qa: bool,
    pub overall: bool,
}

pub fn case_rows(n: u32) -> Vec<CaseRow> {
    let text = std::fs::read_to_string(fixture(&format!("cases/case{n}_outcomes.jsonl"))).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Outcome records as the harness would have produced them, given the
/// transcribed verdicts. A routing miss is recorded as `furniture`, a label
/// none of the case questions carries.
pub fn case_outcomes(n: u32) -> Vec<QueryOutcome> {
    case_rows(n)
        .into_iter()
        .map(|r| QueryOutcome {
            question: r.question,
            gold_label: r.table_label,
            predicted_label: Some(if r.intent {
                r.table_label
            } else {
                ElementClass::Furniture
            }),
            query_type: Some(r.query_type),
            intent_correct: r.intent,
            qa_correct: r.qa,
            overall_correct: r.overall,
            expected: String::new(),
            got_qa: String::new(),
            got_end_to_end: String::new(),
            errors: Vec::new(),
        })
        .collect()
}
