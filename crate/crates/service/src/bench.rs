//! Load generator for a running service: `clients` concurrent loops, each
//! sending `requests` identical batch requests back to back.

use std::time::{Duration, Instant};

use rlink_core::store::QueryRecord;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("service unreachable at {url}: {reason}")]
    ServiceUnreachable { url: String, reason: String },
    #[error("service answered {status}: {body}")]
    BadStatus { status: u16, body: String },
    #[error("invalid bench settings: {0}")]
    Settings(String),
}

impl BenchError {
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::ServiceUnreachable { .. } => "ServiceUnreachable",
            BenchError::BadStatus { .. } => "BadStatus",
            BenchError::Settings(_) => "Settings",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub url: String,
    pub clients: usize,
    pub requests: usize,
    pub batch: Vec<QueryRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub clients: usize,
    pub requests: usize,
    pub batch_size: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Requests per second over the whole run.
    pub throughput_rps: f64,
    /// Coefficient of variation of window means over the second half.
    pub steady_cv: f64,
    pub high_water_mark: u64,
    #[serde(skip)]
    pub latencies_ms: Vec<f64>,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "clients,requests,batch_size,mean_ms,p50_ms,p95_ms,throughput_rps,steady_cv,high_water_mark";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.2},{:.4},{}",
            self.clients,
            self.requests,
            self.batch_size,
            self.mean_ms,
            self.p50_ms,
            self.p95_ms,
            self.throughput_rps,
            self.steady_cv,
            self.high_water_mark
        )
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Splits the second half of `series` into up to five windows and returns
/// the coefficient of variation of their means.
pub fn steady_state_cv(series: &[f64]) -> f64 {
    let tail = &series[series.len() / 2..];
    if tail.len() < 2 {
        return 0.0;
    }
    let windows = tail.len().min(5);
    let size = tail.len().div_ceil(windows);
    let means: Vec<f64> = tail.chunks(size).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / means.len() as f64;
    var.sqrt() / mean
}

fn unreachable(url: &str, e: impl ToString) -> BenchError {
    BenchError::ServiceUnreachable {
        url: url.to_string(),
        reason: e.to_string(),
    }
}

async fn get_json(client: &reqwest::Client, url: &str) -> Result<Value, BenchError> {
    let resp = client.get(url).send().await.map_err(|e| unreachable(url, e))?;
    let status = resp.status();
    let body = resp.text().await.map_err(|e| unreachable(url, e))?;
    if !status.is_success() {
        return Err(BenchError::BadStatus {
            status: status.as_u16(),
            body,
        });
    }
    serde_json::from_str(&body).map_err(|e| unreachable(url, e))
}

/// Waits until `/health` answers 200 or `timeout` elapses.
pub async fn wait_ready(url: &str, timeout: Duration) -> Result<(), BenchError> {
    let client = reqwest::Client::new();
    let health = format!("{}/health", url.trim_end_matches('/'));
    let start = Instant::now();
    loop {
        let last = match client.get(&health).send().await {
            Ok(r) if r.status().is_success() => return Ok(()),
            Ok(r) => format!("status {}", r.status()),
            Err(e) => e.to_string(),
        };
        if start.elapsed() > timeout {
            return Err(unreachable(&health, last));
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

/// Runs the load and reads the service's concurrency high-water mark
/// from `/info` afterwards.
pub async fn run(settings: &BenchSettings) -> Result<BenchReport, BenchError> {
    if settings.clients == 0 || settings.requests == 0 || settings.batch.is_empty() {
        return Err(BenchError::Settings("clients, requests and batch size must be positive".into()));
    }
    let base = settings.url.trim_end_matches('/').to_string();
    let client = reqwest::Client::new();
    get_json(&client, &format!("{base}/info")).await?;

    let body = serde_json::to_vec(&json!({ "queries": settings.batch })).expect("queries serialize");
    let link_url = format!("{base}/link");
    let start = Instant::now();
    let mut tasks = Vec::with_capacity(settings.clients);
    for _ in 0..settings.clients {
        let client = client.clone();
        let url = link_url.clone();
        let body = body.clone();
        let requests = settings.requests;
        tasks.push(tokio::spawn(async move {
            let mut samples = Vec::with_capacity(requests);
            for _ in 0..requests {
                let t = Instant::now();
                let resp = client
                    .post(&url)
                    .header("content-type", "application/json")
                    .body(body.clone())
                    .send()
                    .await
                    .map_err(|e| unreachable(&url, e))?;
                let status = resp.status();
                let text = resp.text().await.map_err(|e| unreachable(&url, e))?;
                if !status.is_success() {
                    return Err(BenchError::BadStatus {
                        status: status.as_u16(),
                        body: text,
                    });
                }
                samples.push((t, t.elapsed().as_secs_f64() * 1e3));
            }
            Ok(samples)
        }));
    }
    let mut samples = Vec::new();
    for task in tasks {
        let part = task.await.map_err(|e| BenchError::Settings(e.to_string()))??;
        samples.extend(part);
    }
    let wall = start.elapsed().as_secs_f64();

    samples.sort_by_key(|(t, _)| *t);
    let latencies: Vec<f64> = samples.into_iter().map(|(_, ms)| ms).collect();
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let info = get_json(&client, &format!("{base}/info")).await?;
    Ok(BenchReport {
        clients: settings.clients,
        requests: latencies.len(),
        batch_size: settings.batch.len(),
        mean_ms: latencies.iter().sum::<f64>() / latencies.len() as f64,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        throughput_rps: latencies.len() as f64 / wall,
        steady_cv: steady_state_cv(&latencies),
        high_water_mark: info["highWaterMark"].as_u64().unwrap_or(0),
        latencies_ms: latencies,
    })
}
