//! HTTP API over a case store. All routes live under `/api/v1`; everything
//! else is served from an optional static directory.
//!
//! | Route | Response |
//! |---|---|
//! | `POST /cases?format&case_id` | 201 [`CaseRecord`] |
//! | `GET /cases` | case records, newest first |
//! | `GET /cases/{id}` | [`CaseRecord`] |
//! | `GET /cases/{id}/activity` | [`views::ActivityView`] |
//! | `GET /cases/{id}/plans/{p}/actions/{a}/operations` | [`views::OperationList`] |
//! | `GET /cases/{id}/operations/{op_id}` | [`views::OperationDetail`] |
//! | `GET /cases/{id}/signals` | diagnostic signals |

pub mod error;
pub mod filter;
pub mod schemas;
pub mod views;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::{to_bytes, Body};
use axum::extract::{Path, RawQuery, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use atd_core::ingest::{ingest, IngestOptions};
use atd_core::layering::DEFAULT_STALL_THRESHOLD;
use atd_core::store::{case_record, list_cases, load_case, CaseDocuments, CaseRecord};
use atd_core::trace::{RawTrace, SourceFormat};
use atd_core::{detect_signals, CaseAnalysis, Deterministic, OpTypeTable, Summarizer};

pub use error::ApiError;
use filter::FilterQuery;
use views::{ActivityView, OperationDetail, OperationList};

pub const API_PREFIX: &str = "/api/v1";
pub const DEFAULT_MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct ServiceConfig {
    pub store_root: PathBuf,
    pub summarizer: Arc<dyn Summarizer>,
    pub table: Arc<OpTypeTable>,
    pub stall_threshold: usize,
    pub max_body_bytes: usize,
    /// Allowed browser origin; `*` allows any.
    pub cors_origin: Option<String>,
    /// Served for every non-API path when set.
    pub static_dir: Option<PathBuf>,
    /// Persist summaries per case (for remote summarizers).
    pub cache_summaries: bool,
}

impl ServiceConfig {
    /// Deterministic summaries, default op-type table, no CORS, no static files.
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        Self {
            store_root: store_root.into(),
            summarizer: Arc::new(Deterministic),
            table: Arc::new(atd_core::summarize::default_table()),
            stall_threshold: DEFAULT_STALL_THRESHOLD,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            cors_origin: None,
            static_dir: None,
            cache_summaries: false,
        }
    }
}

struct AppState {
    config: ServiceConfig,
    /// Serializes writes per case id.
    write_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Stored cases never change, so each is read from disk once.
    loaded: RwLock<HashMap<String, Arc<Loaded>>>,
}

struct Loaded {
    analysis: CaseAnalysis,
    trace: RawTrace,
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

impl AppState {
    fn write_lock(&self, case_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.write_locks
            .lock()
            .expect("lock table poisoned")
            .entry(case_id.to_string())
            .or_default()
            .clone()
    }
}

pub fn router(config: ServiceConfig) -> Router {
    let cors = config.cors_origin.as_deref().map(cors_layer);
    let static_dir = config.static_dir.clone();
    let state = Arc::new(AppState {
        config,
        write_locks: Mutex::default(),
        loaded: RwLock::default(),
    });
    let api = Router::new()
        .route("/cases", post(create_case).get(get_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/activity", get(get_activity))
        .route(
            "/cases/{id}/plans/{p}/actions/{a}/operations",
            get(get_operations),
        )
        .route("/cases/{id}/operations/{op_id}", get(get_operation))
        .route("/cases/{id}/signals", get(get_signals))
        .fallback(unknown_route)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    let mut app = Router::new().nest(API_PREFIX, api);
    app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(unknown_route),
    };
    match cors {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

/// Serves until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

fn cors_layer(origin: &str) -> CorsLayer {
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        match HeaderValue::from_str(origin) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::list([]),
        }
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
}

async fn unknown_route() -> ApiError {
    ApiError::not_found("not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed on this route",
    )
}

/// Runs blocking store work off the async runtime.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker task failed: {e}")))?
}

/// Default id for an upload without `case_id`: a content hash.
pub fn default_case_id(body: &[u8]) -> String {
    format!("case-{}", &hex::encode(Sha256::digest(body))[..12])
}

async fn create_case(
    State(state): State<Shared>,
    RawQuery(raw): RawQuery,
    body: Body,
) -> ApiResult<impl IntoResponse> {
    let mut format = SourceFormat::Ctef;
    let mut case_id = None;
    let mut seen = Vec::new();
    for (k, v) in form_urlencoded::parse(raw.as_deref().unwrap_or("").as_bytes()) {
        if seen.contains(&k) {
            return Err(ApiError::bad_request(format!(
                "parameter `{k}` given more than once"
            )));
        }
        match k.as_ref() {
            "format" => format = v.parse().map_err(ApiError::bad_request)?,
            "case_id" => case_id = Some(v.to_string()),
            other => {
                return Err(ApiError::bad_request(format!(
                    "unknown parameter `{other}`"
                )))
            }
        }
        seen.push(k);
    }
    let limit = state.config.max_body_bytes;
    let bytes = to_bytes(body, limit).await.map_err(|_| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("request body exceeds {limit} bytes"),
        )
    })?;
    let case_id = case_id.unwrap_or_else(|| default_case_id(&bytes));
    let lock = state.write_lock(&case_id);
    let _guard = lock.lock().await;
    let st = state.clone();
    let record = blocking(move || {
        let c = &st.config;
        Ok(ingest(
            &c.store_root,
            &case_id,
            format,
            &bytes,
            IngestOptions {
                summarizer: c.summarizer.as_ref(),
                table: &c.table,
                cache_summaries: c.cache_summaries,
                manifest: None,
            },
        )?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_cases(State(state): State<Shared>) -> ApiResult<Json<Vec<CaseRecord>>> {
    blocking(move || Ok(Json(list_cases(&state.config.store_root)?))).await
}

async fn get_case(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<CaseRecord>> {
    blocking(move || Ok(Json(case_record(&state.config.store_root, &id)?))).await
}

/// Loads an analyzed case.
async fn load(state: &Shared, id: String) -> ApiResult<Arc<Loaded>> {
    if let Some(hit) = state.loaded.read().expect("case cache poisoned").get(&id) {
        return Ok(hit.clone());
    }
    let st = state.clone();
    blocking(move || {
        let (
            _,
            CaseDocuments {
                trace, analysis, ..
            },
        ) = load_case(&st.config.store_root, &id)?;
        let analysis = analysis.ok_or_else(|| {
            ApiError::new(
                StatusCode::CONFLICT,
                "case_not_analyzed",
                format!("case `{id}` has no analysis"),
            )
        })?;
        let loaded = Arc::new(Loaded { analysis, trace });
        st.loaded
            .write()
            .expect("case cache poisoned")
            .insert(id, loaded.clone());
        Ok(loaded)
    })
    .await
}

async fn get_activity(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<ActivityView>> {
    let case = load(&state, id).await?;
    Ok(Json(ActivityView::new(&case.analysis)))
}

async fn get_operations(
    State(state): State<Shared>,
    Path((id, p, a)): Path<(String, String, String)>,
    RawQuery(raw): RawQuery,
) -> ApiResult<Json<OperationList>> {
    let query = FilterQuery::parse(raw.as_deref()).map_err(ApiError::bad_filter)?;
    let loaded = load(&state, id).await?;
    let (case, trace) = (&loaded.analysis, &loaded.trace);
    let not_found =
        || ApiError::not_found("action_not_found", format!("no action {a} in plan {p}"));
    let (pi, ai) = match (p.parse::<usize>(), a.parse::<usize>()) {
        (Ok(pi), Ok(ai)) => (pi, ai),
        _ => return Err(not_found()),
    };
    let action = case.action(pi, ai).ok_or_else(not_found)?;
    Ok(Json(OperationList::new(case, trace, pi, action, &query)))
}

async fn get_operation(
    State(state): State<Shared>,
    Path((id, op_id)): Path<(String, String)>,
) -> ApiResult<Json<OperationDetail>> {
    let case = load(&state, id).await?;
    OperationDetail::new(&case.analysis, &case.trace, &op_id)
        .map(Json)
        .ok_or_else(|| {
            ApiError::not_found("operation_not_found", format!("no operation `{op_id}`"))
        })
}

async fn get_signals(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<atd_core::DiagnosticSignal>>> {
    let case = load(&state, id).await?;
    let caps = state.config.table.capabilities();
    detect_signals(
        &case.analysis,
        &case.trace,
        &caps,
        state.config.stall_threshold,
    )
    .map(Json)
    .map_err(|e| ApiError::internal(e.to_string()))
}
