//! Subcommands. Each returns the process exit code.

use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;

use bimqa_core::eval::{
    emit_report, evaluate, load_dataset, DirTableSource, EvalOptions, ExecQa, QaBackend,
    ReportFormat,
};
use bimqa_core::ifc::IngestError;
use bimqa_core::ifc::Strictness;
use bimqa_core::intent::{IntentBackend, Lexicon};
use bimqa_core::llm::{
    default_intent_template, default_qa_template, LlmClient, LlmConfig, LlmError, LlmIntentBackend,
    LlmTableQa, DEFAULT_SEGMENT_ROWS, DEFAULT_TABLE_BUDGET,
};
use bimqa_core::pipeline::{extract_file, ExtractError};
use bimqa_core::qa::QueryPlan;
use bimqa_core::table::write_model_dir;
use bimqa_core::ElementClass;
use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, ServiceConfig};
use crate::query::{
    load_tables, names, Answerer, IntentChoice, QaChoice, QueryError, QueryRequest, QueryResponse,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_AMBIGUOUS: i32 = 3;
pub const EXIT_AUTH: i32 = 4;
pub const EXIT_LLM: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "bimqa",
    version,
    propagate_version = true,
    about = "Natural-language questions over IFC building models"
)]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an IFC file into the eight element tables.
    Extract(ExtractArgs),
    /// Answer one question from extracted tables.
    Ask(AskArgs),
    /// Score routing and answering over an annotated dataset.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub ifc: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Stop at the first malformed entity instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    /// Largest serialized table (characters) sent in one prompt.
    #[arg(long, default_value_t = DEFAULT_TABLE_BUDGET)]
    pub budget: usize,
    /// Rows per prompt when a table exceeds the budget.
    #[arg(long, default_value_t = DEFAULT_SEGMENT_ROWS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub segment_rows: u64,
    /// Append prompts and replies to this JSON-lines file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// Directory written by `extract`.
    pub tables: PathBuf,
    pub question: String,
    /// Model name when the directory holds several.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum, default_value_t = IntentChoice::Lexicon)]
    pub intent: IntentChoice,
    #[arg(long, value_enum, default_value_t = QaChoice::Exec)]
    pub qa: QaChoice,
    /// Run this JSON plan through the executor; skips routing and planning.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Answer against this table instead of routing.
    #[arg(long)]
    pub label: Option<ElementClass>,
    /// Print the full response as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotations as JSON lines, CSV or TSV.
    pub dataset: PathBuf,
    /// Root that the annotations' table files are relative to.
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long, value_enum, default_value_t = IntentChoice::Lexicon)]
    pub intent: IntentChoice,
    #[arg(long, value_enum, default_value_t = QaChoice::Exec)]
    pub qa: QaChoice,
    /// json, markdown or csv.
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML file of `key = value` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub max_upload_bytes: Option<usize>,
    /// Keep extracted CSVs here, keyed by the sha256 of the upload.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Extract(a) => extract(&a),
        Command::Ask(a) => ask(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("bimqa: {message}");
    code
}

pub fn extract(args: &ExtractArgs) -> i32 {
    let strictness = if args.strict {
        Strictness::Strict
    } else {
        Strictness::Lenient
    };
    let ex = match extract_file(&args.ifc, strictness) {
        Ok(ex) => ex,
        Err(e @ ExtractError::Ingest(IngestError::Io { .. })) => return fail(EXIT_USAGE, e),
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    for d in &ex.diagnostics {
        eprintln!("{d}");
    }
    if let Err(e) = write_model_dir(&ex.tables, &args.out) {
        return fail(EXIT_FAILURE, e);
    }
    println!(
        "{} entities read from {}",
        ex.entity_count,
        args.ifc.display()
    );
    for (label, db) in &ex.tables.tables {
        println!("{:<10} {:>6} rows", label.as_str(), db.row_count());
    }
    EXIT_OK
}

fn llm_client(llm: &LlmArgs) -> Result<LlmClient, LlmError> {
    let cfg = LlmConfig {
        transcript: llm.transcript.clone(),
        ..LlmConfig::from_env()
    };
    LlmClient::new(cfg)
}

fn query_exit(e: &QueryError) -> i32 {
    match e {
        QueryError::Ambiguous(_) | QueryError::NoMatch => EXIT_AMBIGUOUS,
        QueryError::Llm(LlmError::Auth(_)) => EXIT_AUTH,
        QueryError::Llm(_) | QueryError::Intent(_) => EXIT_LLM,
        QueryError::MissingTable(_) | QueryError::Qa(_) => EXIT_FAILURE,
    }
}

/// Ask on the terminal which table to use; `None` on bad input or EOF.
fn choose(candidates: &[ElementClass]) -> Option<ElementClass> {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "The question could mean several tables:");
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(err, "  {}) {c}", i + 1);
    }
    let _ = write!(err, "Pick one: ");
    let _ = err.flush();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).ok()?;
    let line = line.trim();
    match line.parse::<usize>() {
        Ok(n) if (1..=candidates.len()).contains(&n) => Some(candidates[n - 1]),
        _ => line.parse().ok().filter(|l| candidates.contains(l)),
    }
}

pub fn print_response(res: &QueryResponse) {
    println!("intent: {} ({})", res.intent, res.backends.intent);
    println!("answer: {}", res.answer.texts.join(", "));
    if let Some(f) = res.answer.float_value {
        println!("float: {}", bimqa_core::qa::format_float(f));
    }
    let cells: Vec<String> = res
        .answer
        .coordinates
        .iter()
        .map(|c| format!("({}, {})", c.row, c.col))
        .collect();
    println!("cells: {}", cells.join(" "));
    println!(
        "qa: {} ({})",
        res.backends.qa,
        res.answer.aggregation.as_str()
    );
    if res.segments > 1 {
        println!("segments: {} (table split across prompts)", res.segments);
    }
}

pub fn ask(args: &AskArgs) -> i32 {
    let plan = match &args.plan {
        None => None,
        Some(path) => match std::fs::read_to_string(path) {
            Err(e) => return fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())),
            Ok(text) => match serde_json::from_str::<QueryPlan>(&text) {
                Ok(p) => Some(p),
                Err(e) => return fail(EXIT_FAILURE, format!("plan {}: {e}", path.display())),
            },
        },
    };
    let tables = match load_tables(&args.tables, args.model.as_deref()) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let client = match llm_client(&args.llm) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_LLM, e),
    };
    let lexicon = Lexicon::default();
    let answerer = Answerer {
        lexicon: &lexicon,
        llm: &client,
        budget: args.llm.budget,
        segment_rows: args.llm.segment_rows as usize,
    };
    let mut req = QueryRequest {
        question: args.question.clone(),
        intent_backend: args.intent,
        qa_backend: args.qa,
        plan,
        label: args.label,
    };
    let mut result = answerer.ask(&tables, &req);
    if let Err(QueryError::Ambiguous(c)) = &result {
        if std::io::stdin().is_terminal() {
            if let Some(label) = choose(c) {
                req.label = Some(label);
                result = answerer.ask(&tables, &req);
            }
        }
    }
    match result {
        Ok(res) => {
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&res).expect("response serializes")
                );
            } else {
                print_response(&res);
            }
            EXIT_OK
        }
        Err(e @ QueryError::Ambiguous(_)) => {
            fail(EXIT_AMBIGUOUS, format!("{e}; rerun with --label <table>"))
        }
        Err(e @ QueryError::NoMatch) => fail(
            EXIT_AMBIGUOUS,
            format!(
                "{e}; candidates: {}; rerun with --label <table>",
                names(&ElementClass::ALL)
            ),
        ),
        Err(e) => fail(query_exit(&e), e),
    }
}

pub fn eval(args: &EvalArgs) -> i32 {
    let annotations = match load_dataset(&args.dataset) {
        Ok(a) => a,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let uses_llm = args.intent == IntentChoice::Llm || args.qa == QaChoice::Llm;
    let client = match llm_client(&args.llm) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_LLM, e),
    };
    let key_env = client.config().api_key_env.clone();
    if uses_llm && std::env::var_os(&key_env).is_none() {
        return fail(
            EXIT_AUTH,
            format!("environment variable {key_env} is not set"),
        );
    }
    let lexicon = Lexicon::default();
    let llm_intent = LlmIntentBackend {
        client: &client,
        template: default_intent_template(),
    };
    let llm_qa = LlmTableQa {
        client: &client,
        template: default_qa_template(),
        budget: args.llm.budget,
        segment_rows: args.llm.segment_rows as usize,
    };
    let intent: &(dyn IntentBackend + Sync) = match args.intent {
        IntentChoice::Lexicon => &lexicon,
        IntentChoice::Llm => &llm_intent,
    };
    let qa: &dyn QaBackend = match args.qa {
        QaChoice::Exec => &ExecQa,
        QaChoice::Llm => &llm_qa,
    };
    let report = evaluate(
        &annotations,
        intent,
        qa,
        &DirTableSource::new(&args.tables),
        &EvalOptions::default(),
    );
    let text = emit_report(&report, args.format);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                return fail(
                    EXIT_FAILURE,
                    format!("cannot write {}: {e}", path.display()),
                );
            }
            eprintln!(
                "{} queries: intent {:.1}%, qa {:.1}%, overall {:.1}%; report in {}",
                report.n_queries,
                report.intent_accuracy * 100.0,
                report.qa_accuracy * 100.0,
                report.overall_accuracy * 100.0,
                path.display()
            );
        }
        None => print!("{text}"),
    }
    if report.errors > 0 {
        return fail(
            EXIT_FAILURE,
            format!("{} queries hit backend or table errors", report.errors),
        );
    }
    EXIT_OK
}

fn env_lookup(key: &str) -> Option<String> {
    std::env::var(key).ok()
}

pub fn serve(args: &ServeArgs) -> i32 {
    let env = match Overrides::from_env(&env_lookup) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let flags = Overrides {
        host: args.host.clone(),
        port: args.port,
        max_upload_bytes: args.max_upload_bytes,
        cache_dir: args.cache_dir.clone(),
        ..Overrides::default()
    };
    let cfg = match ServiceConfig::resolve(args.config.as_deref(), &env, &flags) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    match runtime.block_on(crate::service::serve(cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILURE, e),
    }
}
