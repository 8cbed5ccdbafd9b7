//! Routing and answering one question against a loaded model. Shared by
//! `bimqa ask` and the HTTP service.

use std::collections::BTreeSet;
use std::path::Path;

use bimqa_core::intent::{parse_label, IntentError, Lexicon};
use bimqa_core::llm::{
    answer_with_llm, build_intent_prompt, default_intent_template, default_qa_template, LlmClient,
    LlmError,
};
use bimqa_core::qa::{derive_plan, execute, Answer, QaError, QueryPlan};
use bimqa_core::table::{read_model_dir, ModelTables, TableError};
use bimqa_core::ElementClass;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IntentChoice {
    #[default]
    Lexicon,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum QaChoice {
    #[default]
    Exec,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub question: String,
    #[serde(default)]
    pub intent_backend: IntentChoice,
    #[serde(default)]
    pub qa_backend: QaChoice,
    /// Run this plan through the executor instead of reading the question.
    #[serde(default)]
    pub plan: Option<QueryPlan>,
    /// Skip routing and answer against this table.
    #[serde(default)]
    pub label: Option<ElementClass>,
}

impl QueryRequest {
    pub fn new(question: impl Into<String>) -> Self {
        QueryRequest {
            question: question.into(),
            intent_backend: IntentChoice::Lexicon,
            qa_backend: QaChoice::Exec,
            plan: None,
            label: None,
        }
    }
}

/// Which component produced the label and the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backends {
    /// `lexicon`, `llm`, `label` (given by the caller) or `plan`.
    pub intent: String,
    /// `exec` or `llm`.
    pub qa: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub question: String,
    pub intent: ElementClass,
    pub answer: Answer,
    pub backends: Backends,
    /// The plan the executor ran; absent for model answers.
    pub plan: Option<QueryPlan>,
    /// Prompts the table was split into; 1 when it fit.
    pub segments: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("ambiguous question, candidates: {}", names(.0))]
    Ambiguous(Vec<ElementClass>),
    #[error("no table matches the question")]
    NoMatch,
    #[error("the model has no {0} table")]
    MissingTable(ElementClass),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("intent: {0}")]
    Intent(IntentError),
}

pub fn names(labels: &[ElementClass]) -> String {
    labels
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

pub struct Answerer<'a> {
    pub lexicon: &'a Lexicon,
    pub llm: &'a LlmClient,
    pub budget: usize,
    pub segment_rows: usize,
}

impl Answerer<'_> {
    fn route(&self, req: &QueryRequest) -> Result<(ElementClass, &'static str), QueryError> {
        if let Some(label) = req.label {
            return Ok((label, "label"));
        }
        if let Some(plan) = &req.plan {
            return Ok((plan.table, "plan"));
        }
        let routed = match req.intent_backend {
            IntentChoice::Lexicon => self.lexicon.classify(&req.question),
            IntentChoice::Llm => {
                let prompt = build_intent_prompt(&req.question, &default_intent_template());
                parse_label(&self.llm.complete(&prompt)?)
            }
        };
        match routed {
            Ok(label) => Ok((label, backend_name(req.intent_backend))),
            Err(IntentError::Ambiguous(c)) => Err(QueryError::Ambiguous(c)),
            Err(IntentError::NoMatch) => Err(QueryError::NoMatch),
            Err(e) => Err(QueryError::Intent(e)),
        }
    }

    pub fn ask(
        &self,
        tables: &ModelTables,
        req: &QueryRequest,
    ) -> Result<QueryResponse, QueryError> {
        let uses_llm = req.qa_backend == QaChoice::Llm
            || (req.intent_backend == IntentChoice::Llm
                && req.label.is_none()
                && req.plan.is_none());
        let key_env = &self.llm.config().api_key_env;
        if uses_llm && std::env::var_os(key_env).is_none() {
            return Err(
                LlmError::Auth(format!("environment variable {key_env} is not set")).into(),
            );
        }
        let (label, intent_source) = self.route(req)?;
        let db = tables.get(label).ok_or(QueryError::MissingTable(label))?;
        let (answer, plan, segments, qa) = match (&req.plan, req.qa_backend) {
            (Some(plan), _) => (execute(plan, db)?, Some(plan.clone()), 1, "exec"),
            (None, QaChoice::Exec) => {
                let plan = derive_plan(&req.question, db)?;
                (execute(&plan, db)?, Some(plan), 1, "exec")
            }
            (None, QaChoice::Llm) => {
                let a = answer_with_llm(
                    self.llm,
                    &default_qa_template(),
                    &req.question,
                    db,
                    self.budget,
                    self.segment_rows,
                )?;
                (a.answer, None, a.segments, "llm")
            }
        };
        Ok(QueryResponse {
            question: req.question.clone(),
            intent: label,
            answer,
            backends: Backends {
                intent: intent_source.to_string(),
                qa: qa.to_string(),
            },
            plan,
            segments,
        })
    }
}

fn backend_name(choice: IntentChoice) -> &'static str {
    match choice {
        IntentChoice::Lexicon => "lexicon",
        IntentChoice::Llm => "llm",
    }
}

/// Model names present in a tables directory, from `<model>_meta.json`
/// sidecars or else from `<model>_<label>.csv` file names.
pub fn model_names(dir: &Path) -> std::io::Result<BTreeSet<String>> {
    let mut metas = BTreeSet::new();
    let mut csvs = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(model) = name.strip_suffix("_meta.json") {
            metas.insert(model.to_string());
        } else if let Some((model, label)) =
            name.strip_suffix(".csv").and_then(|s| s.rsplit_once('_'))
        {
            if label.parse::<ElementClass>().is_ok() {
                csvs.insert(model.to_string());
            }
        }
    }
    Ok(if metas.is_empty() { csvs } else { metas })
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("no model tables in {0}")]
    Empty(String),
    #[error("{dir} holds several models ({}); pass --model", .names.join(", "))]
    Several { dir: String, names: Vec<String> },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Load the tables of `model`, or of the only model in `dir`.
pub fn load_tables(dir: &Path, model: Option<&str>) -> Result<ModelTables, LoadError> {
    let shown = dir.display().to_string();
    let name = match model {
        Some(m) => m.to_string(),
        None => {
            let names = model_names(dir).map_err(|e| LoadError::Io(shown.clone(), e))?;
            match names.len() {
                0 => return Err(LoadError::Empty(shown)),
                1 => names.into_iter().next().expect("one name"),
                _ => {
                    return Err(LoadError::Several {
                        dir: shown,
                        names: names.into_iter().collect(),
                    })
                }
            }
        }
    };
    let tables = read_model_dir(dir, &name)?;
    if tables.tables.is_empty() {
        return Err(LoadError::Empty(shown));
    }
    Ok(tables)
}
