//! Running both stages over a dataset.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::ElementClass;
use crate::intent::{IntentBackend, IntentError};
use crate::qa::{derive_plan, execute, match_answers, Answer, QueryPlan, DEFAULT_FLOAT_TOL};
use crate::table::{read_csv, SubDatabase};

use super::dataset::{Annotation, QueryType};
use super::report::EvalReport;

/// Where annotation `table_file`s are loaded from.
pub trait TableSource: Sync {
    fn load(&self, table_file: &Path) -> Result<Arc<SubDatabase>, String>;
}

/// CSV tables under a root directory, cached after the first read.
pub struct DirTableSource {
    root: PathBuf,
    cache: Mutex<HashMap<PathBuf, Arc<SubDatabase>>>,
}

impl DirTableSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirTableSource {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl TableSource for DirTableSource {
    fn load(&self, table_file: &Path) -> Result<Arc<SubDatabase>, String> {
        let path = self.root.join(table_file);
        if let Some(db) = self.cache.lock().expect("cache lock").get(&path) {
            return Ok(db.clone());
        }
        let db = Arc::new(read_csv(&path).map_err(|e| e.to_string())?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(path, db.clone());
        Ok(db)
    }
}

/// `<model>_<label>.csv` with the label replaced; `None` if the name does
/// not follow that pattern.
pub fn sibling_table(table_file: &Path, label: ElementClass) -> Option<PathBuf> {
    let name = table_file.file_name()?.to_str()?;
    let stem = name.strip_suffix(".csv")?;
    let (model, _) = stem.rsplit_once('_')?;
    Some(table_file.with_file_name(format!("{model}_{label}.csv")))
}

/// Table QA as seen by the harness.
pub trait QaBackend: Sync {
    fn name(&self) -> &str;
    fn answer(&self, annotation: &Annotation, table: &SubDatabase) -> Result<Answer, String>;
}

/// Runs the annotation's plan through the deterministic executor, or a
/// keyword plan when the annotation has none. The plan is retargeted at
/// whatever table it is given.
pub struct ExecQa;

impl QaBackend for ExecQa {
    fn name(&self) -> &str {
        "exec"
    }

    fn answer(&self, annotation: &Annotation, table: &SubDatabase) -> Result<Answer, String> {
        let plan = match &annotation.plan {
            Some(plan) => QueryPlan {
                table: table.label(),
                ..plan.clone()
            },
            None => derive_plan(&annotation.question, table).map_err(|e| e.to_string())?,
        };
        execute(&plan, table).map_err(|e| e.to_string())
    }
}

/// Fixed answers keyed by question text.
pub struct CannedQa {
    pub answers: HashMap<String, Answer>,
}

impl QaBackend for CannedQa {
    fn name(&self) -> &str {
        "canned"
    }

    fn answer(&self, annotation: &Annotation, _: &SubDatabase) -> Result<Answer, String> {
        self.answers
            .get(&annotation.question)
            .cloned()
            .ok_or_else(|| format!("no canned answer for {:?}", annotation.question))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Intent,
    Qa,
    EndToEnd,
}

/// What happened to one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub question: String,
    pub gold_label: ElementClass,
    /// `None` when routing abstained or failed.
    pub predicted_label: Option<ElementClass>,
    pub query_type: Option<QueryType>,
    pub intent_correct: bool,
    pub qa_correct: bool,
    pub overall_correct: bool,
    pub expected: String,
    pub got_qa: String,
    pub got_end_to_end: String,
    /// Backend or table failures (not wrong answers).
    pub errors: Vec<String>,
}

fn describe(answer: &Answer) -> String {
    let texts = format!("[{}]", answer.texts.join(", "));
    match answer.float_value {
        Some(f) if answer.texts.len() != 1 || answer.texts[0] != crate::qa::format_float(f) => {
            format!("{texts} float={}", crate::qa::format_float(f))
        }
        _ => texts,
    }
}

fn expected(annotation: &Annotation) -> String {
    let texts = format!("[{}]", annotation.answer_text.join(", "));
    match annotation.float_answer {
        Some(f) => format!("{texts} float={}", crate::qa::format_float(f)),
        None => texts,
    }
}

pub struct EvalOptions {
    pub float_tol: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            float_tol: DEFAULT_FLOAT_TOL,
        }
    }
}

fn run_qa(
    qa: &dyn QaBackend,
    tables: &dyn TableSource,
    annotation: &Annotation,
    file: &Path,
    tol: f64,
) -> Result<(bool, String), String> {
    let table = tables.load(file)?;
    let answer = qa.answer(annotation, &table)?;
    Ok((match_answers(&answer, annotation, tol), describe(&answer)))
}

/// Score one question. Never fails; problems land in `errors`.
pub fn evaluate_one(
    annotation: &Annotation,
    intent: &(dyn IntentBackend + Sync),
    qa: &dyn QaBackend,
    tables: &dyn TableSource,
    opts: &EvalOptions,
) -> QueryOutcome {
    let mut errors = Vec::new();
    let predicted_label = match intent.classify(&annotation.question) {
        Ok(label) => Some(label),
        Err(IntentError::Backend(e)) => {
            errors.push(format!("intent: {e}"));
            None
        }
        Err(e) => {
            log::debug!("routing abstained on {:?}: {e}", annotation.question);
            None
        }
    };
    let intent_correct = predicted_label == Some(annotation.table_label);

    let (qa_correct, got_qa) = match run_qa(
        qa,
        tables,
        annotation,
        &annotation.table_file,
        opts.float_tol,
    ) {
        Ok(r) => r,
        Err(e) => {
            errors.push(format!("qa: {e}"));
            (false, format!("error: {e}"))
        }
    };

    // Same table as the isolated stage when routing was right.
    let (e2e_correct, got_end_to_end) = match predicted_label {
        Some(label) if label == annotation.table_label => (qa_correct, got_qa.clone()),
        Some(label) => match sibling_table(&annotation.table_file, label) {
            Some(file) => run_qa(qa, tables, annotation, &file, opts.float_tol)
                .unwrap_or_else(|e| (false, format!("error: {e}"))),
            None => (false, "no routed table".to_string()),
        },
        None => (false, "not routed".to_string()),
    };

    QueryOutcome {
        question: annotation.question.clone(),
        gold_label: annotation.table_label,
        predicted_label,
        query_type: annotation.query_type,
        intent_correct,
        qa_correct,
        overall_correct: intent_correct && e2e_correct,
        expected: expected(annotation),
        got_qa,
        got_end_to_end,
        errors,
    }
}

/// Run every annotation through routing, isolated QA on the gold table and
/// end-to-end QA on the routed table.
pub fn evaluate(
    annotations: &[Annotation],
    intent: &(dyn IntentBackend + Sync),
    qa: &dyn QaBackend,
    tables: &dyn TableSource,
    opts: &EvalOptions,
) -> EvalReport {
    let outcomes: Vec<QueryOutcome> = annotations
        .par_iter()
        .map(|a| evaluate_one(a, intent, qa, tables, opts))
        .collect();
    EvalReport::from_outcomes(&outcomes)
}
