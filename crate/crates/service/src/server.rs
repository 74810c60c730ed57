//! HTTP batch linkage over one loaded dataset.
//!
//! `POST /link` takes `{"queries": [...], "options": {...}, "timing": false}`
//! and answers with one result object per query, in request order.
//! At most `max_concurrent_requests` requests run at once; the rest wait
//! in arrival order on a fair semaphore.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rlink_core::config::LinkerConfig;
use rlink_core::pipeline::{LinkOptions, Linker, MatchResult};
use rlink_core::store::QueryRecord;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{Notify, Semaphore};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinkRequest {
    pub queries: Vec<QueryRecord>,
    #[serde(default)]
    pub options: LinkOptions,
    /// Adds per-query wall time to the response.
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryError {
    pub index: usize,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryResult {
    pub matches: Vec<MatchResult>,
    pub comparisons: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<QueryError>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkResponse {
    pub dataset_id: String,
    pub config_digest: String,
    pub results: Vec<QueryResult>,
}

/// Static facts about the loaded dataset.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub records: usize,
    pub band_config: String,
    pub seed: u64,
    pub config_digest: String,
    pub strategy: String,
    pub workers: usize,
    pub max_concurrent_requests: usize,
}

#[derive(Default)]
struct Gauge {
    active: AtomicUsize,
    high_water: AtomicUsize,
}

/// Decrements the active count when a request finishes or is dropped.
struct Admitted<'a>(&'a Gauge);

impl<'a> Admitted<'a> {
    fn enter(g: &'a Gauge) -> Self {
        let now = g.active.fetch_add(1, Ordering::SeqCst) + 1;
        g.high_water.fetch_max(now, Ordering::SeqCst);
        Self(g)
    }
}

impl Drop for Admitted<'_> {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

struct Inner {
    loaded: OnceLock<(Linker, DatasetInfo)>,
    admission: Semaphore,
    gauge: Gauge,
}

/// Shared service state; clones share the same dataset and counters.
#[derive(Clone)]
pub struct Service(Arc<Inner>);

impl Service {
    pub fn new(max_concurrent_requests: usize) -> Self {
        Self(Arc::new(Inner {
            loaded: OnceLock::new(),
            admission: Semaphore::new(max_concurrent_requests.max(1)),
            gauge: Gauge::default(),
        }))
    }

    /// Makes the dataset available; later calls are ignored.
    pub fn install(&self, linker: Linker) {
        let cfg = linker.config();
        let info = DatasetInfo {
            dataset_id: linker.store().dataset_id(),
            records: linker.store().len(),
            band_config: linker.index().config().to_string(),
            seed: cfg.seed,
            config_digest: cfg.digest(),
            strategy: cfg.scoring.strategy.as_str().to_string(),
            workers: cfg.workers,
            max_concurrent_requests: cfg.max_concurrent_requests,
        };
        let _ = self.0.loaded.set((linker, info));
    }

    pub fn is_ready(&self) -> bool {
        self.0.loaded.get().is_some()
    }

    pub fn active_requests(&self) -> usize {
        self.0.gauge.active.load(Ordering::SeqCst)
    }

    /// Most requests ever executing at the same time.
    pub fn high_water_mark(&self) -> usize {
        self.0.gauge.high_water.load(Ordering::SeqCst)
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/link", post(link))
            .route("/health", get(health))
            .route("/info", get(info))
            .with_state(self.clone())
    }
}

/// Loads the dataset with a worker pool sized for every admitted request
/// to fan out at once.
pub fn load_linker(config: LinkerConfig) -> rlink_core::Result<Linker> {
    let workers = config.workers;
    let threads = workers * config.max_concurrent_requests;
    Linker::load(config)?.with_workers(workers, threads)
}

fn error_body(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "kind": kind, "message": message.into() } }))).into_response()
}

fn not_ready() -> Response {
    error_body(StatusCode::SERVICE_UNAVAILABLE, "NotReady", "dataset is still loading")
}

async fn health(State(svc): State<Service>) -> Response {
    if svc.is_ready() {
        Json(json!({ "status": "ok" })).into_response()
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response()
    }
}

async fn info(State(svc): State<Service>) -> Response {
    let Some((_, info)) = svc.0.loaded.get() else {
        return not_ready();
    };
    let mut body = serde_json::to_value(info).expect("info serializes");
    body["activeRequests"] = json!(svc.active_requests());
    body["highWaterMark"] = json!(svc.high_water_mark());
    Json(body).into_response()
}

async fn link(State(svc): State<Service>, body: Bytes) -> Response {
    let request: LinkRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, "MalformedRequest", e.to_string()),
    };
    if request.queries.is_empty() {
        return error_body(StatusCode::BAD_REQUEST, "MalformedRequest", "queries must not be empty");
    }
    if let Some(t) = request.options.threshold {
        if !(0.0..=1.0).contains(&t) {
            return error_body(StatusCode::BAD_REQUEST, "MalformedRequest", format!("threshold {t} outside [0, 1]"));
        }
    }
    if request.options.top_n == Some(0) {
        return error_body(StatusCode::BAD_REQUEST, "MalformedRequest", "topN must be at least 1");
    }
    let empty: Vec<QueryError> = request
        .queries
        .iter()
        .enumerate()
        .filter(|(_, q)| q.name.trim().is_empty())
        .map(|(index, _)| QueryError {
            index,
            kind: "EmptyQueryName",
            message: "query name is empty".into(),
        })
        .collect();
    if !empty.is_empty() {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({
                "error": { "kind": "EmptyQueryName", "message": format!("{} queries have an empty name", empty.len()) },
                "queries": empty,
            })),
        )
            .into_response();
    }
    if !svc.is_ready() {
        return not_ready();
    }

    let _permit = match svc.0.admission.acquire().await {
        Ok(p) => p,
        Err(_) => return error_body(StatusCode::SERVICE_UNAVAILABLE, "ShuttingDown", "service is stopping"),
    };
    let worker = svc.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let _admitted = Admitted::enter(&worker.0.gauge);
        let (linker, info) = worker.0.loaded.get().expect("checked above");
        let results = linker
            .link_batch_timed(&request.queries, &request.options)
            .into_iter()
            .enumerate()
            .map(|(index, (outcome, took))| {
                let timing_ms = request.timing.then_some(took.as_secs_f64() * 1e3);
                match outcome {
                    Ok(o) => QueryResult {
                        matches: o.results,
                        comparisons: o.comparisons,
                        timing_ms,
                        error: None,
                    },
                    Err(e) => QueryResult {
                        matches: Vec::new(),
                        comparisons: 0,
                        timing_ms,
                        error: Some(QueryError {
                            index,
                            kind: e.kind(),
                            message: e.to_string(),
                        }),
                    },
                }
            })
            .collect();
        LinkResponse {
            dataset_id: info.dataset_id.clone(),
            config_digest: info.config_digest.clone(),
            results,
        }
    })
    .await;
    match outcome {
        Ok(response) => Json(response).into_response(),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()),
    }
}

/// Binds `addr`, loads the dataset in the background and serves until
/// `shutdown` resolves. In-flight requests are drained before returning.
pub async fn serve<F>(config: LinkerConfig, addr: SocketAddr, shutdown: F) -> anyhow::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, config, shutdown).await
}

pub async fn serve_on<F>(listener: TcpListener, config: LinkerConfig, shutdown: F) -> anyhow::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let svc = Service::new(config.max_concurrent_requests);
    log::info!("listening on {}", listener.local_addr()?);
    let failed: Arc<Mutex<Option<anyhow::Error>>> = Arc::default();
    let load_failed = Arc::new(Notify::new());
    {
        let svc = svc.clone();
        let failed = failed.clone();
        let load_failed = load_failed.clone();
        tokio::task::spawn_blocking(move || match load_linker(config) {
            Ok(linker) => {
                log::info!("loaded {} records", linker.store().len());
                svc.install(linker);
            }
            Err(e) => {
                *failed.lock().expect("not poisoned") = Some(e.into());
                load_failed.notify_one();
            }
        });
    }
    let stop = async move {
        tokio::select! {
            _ = shutdown => {}
            _ = load_failed.notified() => {}
        }
    };
    axum::serve(listener, svc.router()).with_graceful_shutdown(stop).await?;
    let err = failed.lock().expect("not poisoned").take();
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
