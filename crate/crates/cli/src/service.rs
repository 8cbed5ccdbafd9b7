//! HTTP/JSON service over the extraction and query pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bimqa_core::eval::{
    emit_report, evaluate, parse_csv as parse_dataset_csv, parse_jsonl, EvalOptions, ExecQa,
    QaBackend, ReportFormat, TableSource,
};
use bimqa_core::ifc::Strictness;
use bimqa_core::intent::{IntentBackend, Lexicon};
use bimqa_core::llm::{
    default_intent_template, default_qa_template, LlmClient, LlmError, LlmIntentBackend, LlmTableQa,
};
use bimqa_core::pipeline::extract_bytes;
use bimqa_core::table::{read_model_dir, write_model_dir, CellValue, ModelTables, SubDatabase};
use bimqa_core::ElementClass;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ServiceConfig;
use crate::query::{model_names, Answerer, IntentChoice, QaChoice, QueryError, QueryRequest};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Error body: `{code, message, details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn unknown_model(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "model_not_found",
            format!("no model {id}"),
        )
    }

    fn bad_json(e: serde_json::Error) -> Self {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_request",
            format!("request body: {e}"),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "details": self.details});
        (self.status, Json(body)).into_response()
    }
}

fn llm_error(e: &LlmError) -> ApiError {
    let code = if matches!(e, LlmError::Auth(_)) {
        "llm_auth"
    } else {
        "llm_failure"
    };
    ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let message = e.to_string();
        match e {
            QueryError::Ambiguous(c) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "ambiguous_intent",
                message,
            )
            .with(json!({ "candidates": c })),
            QueryError::NoMatch => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_intent", message)
                    .with(json!({ "candidates": ElementClass::ALL }))
            }
            QueryError::MissingTable(l) => {
                ApiError::new(StatusCode::NOT_FOUND, "table_not_found", message)
                    .with(json!({ "label": l }))
            }
            QueryError::Qa(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_plan", message)
            }
            QueryError::Llm(e) => llm_error(&e),
            QueryError::Intent(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "intent_failure", message)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Status {
    Pending,
    Ready(Arc<ModelTables>),
    Failed(String),
}

#[derive(Debug, Clone)]
struct ModelRecord {
    filename: String,
    sha256: String,
    created_at: u64,
    cached: bool,
    status: Status,
}

pub struct AppState {
    cfg: ServiceConfig,
    lexicon: Lexicon,
    llm: LlmClient,
    models: RwLock<BTreeMap<String, ModelRecord>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Self, LlmError> {
        let llm = LlmClient::new(cfg.llm_config())?;
        Ok(AppState {
            cfg,
            lexicon: Lexicon::default(),
            llm,
            models: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn record(&self, id: &str) -> Result<ModelRecord, ApiError> {
        self.models
            .read()
            .expect("model lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_model(id))
    }

    fn ready(&self, id: &str) -> Result<Arc<ModelTables>, ApiError> {
        match self.record(id)?.status {
            Status::Ready(t) => Ok(t),
            Status::Pending => Err(ApiError::new(
                StatusCode::CONFLICT,
                "model_pending",
                format!("model {id} is still being extracted"),
            )),
            Status::Failed(e) => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "extraction_failed",
                e,
            )),
        }
    }

    fn answerer(&self) -> Answerer<'_> {
        Answerer {
            lexicon: &self.lexicon,
            llm: &self.llm,
            budget: self.cfg.budget,
            segment_rows: self.cfg.segment_rows,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.cfg.max_upload_bytes;
    Router::new()
        .route(
            "/models",
            post(upload)
                .get(list_models)
                .layer(DefaultBodyLimit::max(limit)),
        )
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/tables", get(list_tables))
        .route("/models/{id}/tables/{label}", get(get_table))
        .route("/models/{id}/query", post(query))
        .route("/eval", post(eval))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .layer(middleware::from_fn(stamp))
        .with_state(state)
}

/// Timing and version on every response.
async fn stamp(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let mut res = next.run(req).await;
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    let h = res.headers_mut();
    if let Ok(v) = HeaderValue::from_str(&format!("total;dur={ms:.3}")) {
        h.append("server-timing", v);
    }
    h.insert("x-bimqa-version", HeaderValue::from_static(VERSION));
    res
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn model_name(filename: &str) -> String {
    let stem = Path::new(filename)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned());
    let clean: String = stem
        .unwrap_or_default()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean.is_empty() {
        "model".to_string()
    } else {
        clean
    }
}

/// Extract, going through the content-hash cache when one is configured.
/// Returns the tables and whether they came from the cache.
fn load_or_extract(
    bytes: &[u8],
    filename: &str,
    sha: &str,
    cache: Option<&PathBuf>,
) -> Result<(ModelTables, bool), String> {
    let dir = cache.map(|c| c.join(sha));
    if let Some(dir) = &dir {
        if let Ok(found) = model_names(dir) {
            if let Some(name) = found.into_iter().next() {
                match read_model_dir(dir, &name) {
                    Ok(tables) => return Ok((tables, true)),
                    Err(e) => log::warn!("ignoring cache entry {}: {e}", dir.display()),
                }
            }
        }
    }
    let ex = extract_bytes(bytes, &model_name(filename), Strictness::Lenient)
        .map_err(|e| e.to_string())?;
    if let Some(dir) = &dir {
        if let Err(e) = write_model_dir(&ex.tables, dir) {
            log::warn!("cache write to {} failed: {e}", dir.display());
        }
    }
    Ok((ex.tables, false))
}

async fn upload(
    State(state): State<Arc<AppState>>,
    mut form: Multipart,
) -> Result<impl IntoResponse, ApiError> {
    let multipart_err = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_upload"
        };
        ApiError::new(status, code, e.body_text())
            .with(json!({ "limit_bytes": state.cfg.max_upload_bytes }))
    };
    let mut file = None;
    while let Some(field) = form.next_field().await.map_err(multipart_err)? {
        if field.name() == Some("file") || field.file_name().is_some() {
            let name = field.file_name().unwrap_or("model.ifc").to_string();
            file = Some((name, field.bytes().await.map_err(multipart_err)?));
            break;
        }
    }
    let (filename, bytes) = file.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_upload",
            "multipart form has no file field",
        )
    })?;
    let sha = hex(&Sha256::digest(&bytes));
    let id = format!("m{:04}", state.next_id.fetch_add(1, Ordering::Relaxed));
    state.models.write().expect("model lock").insert(
        id.clone(),
        ModelRecord {
            filename: filename.clone(),
            sha256: sha.clone(),
            created_at: now(),
            cached: false,
            status: Status::Pending,
        },
    );
    let worker = state.clone();
    let model_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = load_or_extract(&bytes, &filename, &sha, worker.cfg.cache_dir.as_ref());
        let mut models = worker.models.write().expect("model lock");
        if let Some(rec) = models.get_mut(&model_id) {
            match outcome {
                Ok((tables, cached)) => {
                    rec.cached = cached;
                    rec.status = Status::Ready(Arc::new(tables));
                }
                Err(e) => {
                    log::warn!("extraction of {model_id} failed: {e}");
                    rec.status = Status::Failed(e);
                }
            }
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"model_id": id, "status": "pending"})),
    ))
}

fn describe(id: &str, rec: &ModelRecord) -> Value {
    let mut v = json!({
        "model_id": id,
        "filename": rec.filename,
        "sha256": rec.sha256,
        "created_at": rec.created_at,
    });
    match &rec.status {
        Status::Pending => v["status"] = json!("pending"),
        Status::Failed(e) => {
            v["status"] = json!("failed");
            v["error"] = json!(e);
        }
        Status::Ready(t) => {
            v["status"] = json!("ready");
            v["cached"] = json!(rec.cached);
            v["model_name"] = json!(t.model_name);
            let rows: BTreeMap<_, _> = t
                .tables
                .iter()
                .map(|(l, db)| (*l, db.row_count()))
                .collect();
            v["tables"] = json!(rows);
        }
    }
    v
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<Value> {
    let models = state.models.read().expect("model lock");
    Json(Value::Array(
        models.iter().map(|(id, r)| describe(id, r)).collect(),
    ))
}

async fn get_model(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(describe(&id, &state.record(&id)?)))
}

async fn list_tables(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    let tables = state.ready(&id)?;
    let list: Vec<Value> = tables
        .tables
        .iter()
        .map(|(l, db)| json!({"label": l, "rows": db.row_count(), "columns": db.columns()}))
        .collect();
    Ok(Json(
        json!({"model_id": id, "model_name": tables.model_name, "tables": list}),
    ))
}

fn cell_json(cell: &CellValue) -> Value {
    match cell {
        CellValue::Empty => Value::Null,
        CellValue::Number(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => json!(*n as i64),
        CellValue::Number(n) => json!(n),
        CellValue::Text(t) => json!(t),
        CellValue::Ids(ids) => json!(ids),
    }
}

pub fn table_json(db: &SubDatabase) -> Value {
    let rows: Vec<Vec<Value>> = db
        .rows()
        .iter()
        .map(|r| r.iter().map(cell_json).collect())
        .collect();
    json!({
        "label": db.label(),
        "model_name": db.model_name(),
        "length_unit": db.length_unit(),
        "columns": db.columns(),
        "rows": rows,
    })
}

async fn get_table(
    State(state): State<Arc<AppState>>,
    UrlPath((id, label)): UrlPath<(String, String)>,
) -> Result<Json<Value>, ApiError> {
    let tables = state.ready(&id)?;
    let not_found = || {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "table_not_found",
            format!("model {id} has no table {label:?}"),
        )
    };
    let class: ElementClass = label.parse().map_err(|_| not_found())?;
    let db = tables.get(class).ok_or_else(not_found)?;
    Ok(Json(table_json(db)))
}

async fn query(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: QueryRequest = serde_json::from_slice(&body).map_err(ApiError::bad_json)?;
    let tables = state.ready(&id)?;
    let worker = state.clone();
    let res = tokio::task::spawn_blocking(move || worker.answerer().ask(&tables, &req))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    let intent = HeaderValue::from_str(&res.backends.intent).ok();
    let qa = HeaderValue::from_str(&res.backends.qa).ok();
    let mut out = Json(res).into_response();
    if let (Some(i), Some(q)) = (intent, qa) {
        out.headers_mut().insert("x-intent-backend", i);
        out.headers_mut().insert("x-qa-backend", q);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct EvalRequest {
    model_id: String,
    /// Annotation rows as JSON lines, or CSV when `format` is `csv`.
    dataset: String,
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    intent_backend: IntentChoice,
    #[serde(default)]
    qa_backend: QaChoice,
}

/// Resolves `<anything>_<label>.csv` to that table of one model.
struct ModelSource(Arc<ModelTables>);

impl TableSource for ModelSource {
    fn load(&self, table_file: &Path) -> Result<Arc<SubDatabase>, String> {
        let label = table_file
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.rsplit_once('_'))
            .and_then(|(_, l)| l.parse::<ElementClass>().ok())
            .ok_or_else(|| format!("cannot tell the table of {}", table_file.display()))?;
        self.0
            .get(label)
            .map(|db| Arc::new(db.clone()))
            .ok_or_else(|| format!("model has no {label} table"))
    }
}

async fn eval(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EvalRequest = serde_json::from_slice(&body).map_err(ApiError::bad_json)?;
    let tables = state.ready(&req.model_id)?;
    let parsed = match req.format.as_deref().unwrap_or("jsonl") {
        "csv" => parse_dataset_csv(&req.dataset),
        "jsonl" => parse_jsonl(&req.dataset),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                format!("unknown dataset format {other:?}"),
            ))
        }
    };
    let annotations = parsed.map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_dataset",
            e.to_string(),
        )
    })?;
    let uses_llm = req.intent_backend == IntentChoice::Llm || req.qa_backend == QaChoice::Llm;
    if uses_llm && std::env::var_os(&state.cfg.llm_api_key_env).is_none() {
        let e = LlmError::Auth(format!(
            "environment variable {} is not set",
            state.cfg.llm_api_key_env
        ));
        return Err(llm_error(&e));
    }
    let worker = state.clone();
    let report = tokio::task::spawn_blocking(move || {
        let llm_intent = LlmIntentBackend {
            client: &worker.llm,
            template: default_intent_template(),
        };
        let llm_qa = LlmTableQa {
            client: &worker.llm,
            template: default_qa_template(),
            budget: worker.cfg.budget,
            segment_rows: worker.cfg.segment_rows,
        };
        let intent: &(dyn IntentBackend + Sync) = match req.intent_backend {
            IntentChoice::Lexicon => &worker.lexicon,
            IntentChoice::Llm => &llm_intent,
        };
        let qa: &dyn QaBackend = match req.qa_backend {
            QaChoice::Exec => &ExecQa,
            QaChoice::Llm => &llm_qa,
        };
        evaluate(
            &annotations,
            intent,
            qa,
            &ModelSource(tables),
            &EvalOptions::default(),
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let text = emit_report(&report, ReportFormat::Json);
    let value = serde_json::from_str(&text)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(value))
}

/// Bind and serve until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let state = Arc::new(AppState::new(cfg).map_err(std::io::Error::other)?);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    eprintln!(
        "bimqa {VERSION} listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
