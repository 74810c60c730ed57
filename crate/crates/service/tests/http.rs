use std::time::Duration;

use rlink_core::config::LinkerConfig;
use rlink_core::pipeline::{preprocess, PreprocessOptions};
use rlink_service::server::{load_linker, Service};
use serde_json::{json, Value};

const COMPANIES: &str = "name,city,country\n\
Cisco Systems Inc,San Jose,US\n\
Garage Rex AG,Bern,CH\n\
Garage Rey GmbH,Thun,CH\n\
Dürr Bau AG,Zürich,CH\n";

fn toy_config(dir: &std::path::Path, max_concurrent: usize) -> LinkerConfig {
    let input = dir.join("companies.csv");
    std::fs::write(&input, COMPANIES).unwrap();
    let mut cfg = LinkerConfig::default();
    cfg.paths.entity_db = dir.join("e.db");
    cfg.paths.blocking_db = dir.join("b.db");
    cfg.max_concurrent_requests = max_concurrent;
    cfg.workers = 2;
    preprocess(&input, &cfg, PreprocessOptions::default()).unwrap();
    cfg
}

async fn start(svc: &Service) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let router = svc.router();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    url
}

async fn post(url: &str, body: String) -> (u16, Value) {
    let resp = reqwest::Client::new()
        .post(format!("{url}/link"))
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().await.unwrap())
}

#[tokio::test]
async fn health_turns_ready_after_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), 8);
    let svc = Service::new(8);
    let url = start(&svc).await;
    let health = || async { reqwest::get(format!("{url}/health")).await.unwrap().status().as_u16() };
    assert_eq!(health().await, 503);
    assert_eq!(reqwest::get(format!("{url}/info")).await.unwrap().status().as_u16(), 503);
    let (status, _) = post(&url, json!({"queries": [{"name": "acme"}]}).to_string()).await;
    assert_eq!(status, 503);

    svc.install(load_linker(cfg.clone()).unwrap());
    assert_eq!(health().await, 200);
    let info: Value = reqwest::get(format!("{url}/info")).await.unwrap().json().await.unwrap();
    assert_eq!(info["records"], 4);
    assert_eq!(info["bandConfig"], "6/30");
    assert_eq!(info["configDigest"], cfg.digest());
    assert_eq!(info["datasetId"].as_str().unwrap().len(), 16);
}

#[tokio::test]
async fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Service::new(8);
    svc.install(load_linker(toy_config(dir.path(), 8)).unwrap());
    let url = start(&svc).await;

    let (status, body) = post(&url, "{not json".into()).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"]["kind"], "MalformedRequest");
    assert_eq!(post(&url, json!({"queries": []}).to_string()).await.0, 400);
    assert_eq!(post(&url, json!({"query": []}).to_string()).await.0, 400);
    let bad_threshold = json!({"queries": [{"name": "x"}], "options": {"threshold": 2.0}});
    assert_eq!(post(&url, bad_threshold.to_string()).await.0, 400);

    let (status, body) = post(&url, json!({"queries": [{"name": "Garage Rex"}, {"name": "  "}, {"name": ""}]}).to_string()).await;
    assert_eq!(status, 422);
    let errs = body["queries"].as_array().unwrap();
    assert_eq!(errs.len(), 2);
    assert_eq!(errs[0]["index"], 1);
    assert_eq!(errs[1]["index"], 2);
    assert_eq!(errs[0]["kind"], "EmptyQueryName");
}

#[tokio::test]
async fn results_are_aligned_and_timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Service::new(8);
    svc.install(load_linker(toy_config(dir.path(), 8)).unwrap());
    let url = start(&svc).await;

    let names = ["Garage Rex AG", "Cisco Systems, Inc.", "Dürr Bau", "Unrelated Name"];
    let queries: Vec<Value> = names.iter().map(|n| json!({"name": n})).collect();
    let (status, body) = post(&url, json!({"queries": queries, "options": {"topN": 1}}).to_string()).await;
    assert_eq!(status, 200);
    let results = body["results"].as_array().unwrap();
    assert_eq!(results.len(), 4);
    assert_eq!(results[0]["matches"][0]["record"]["name"], "Garage Rex AG");
    assert_eq!(results[1]["matches"][0]["record"]["name"], "Cisco Systems Inc");
    assert_eq!(results[2]["matches"][0]["record"]["name"], "Dürr Bau AG");
    assert!(results[3]["matches"].as_array().unwrap().is_empty());
    assert!(results.iter().all(|r| r.get("timingMs").is_none()));

    let (_, timed) = post(&url, json!({"queries": queries, "timing": true}).to_string()).await;
    assert!(timed["results"].as_array().unwrap().iter().all(|r| r["timingMs"].as_f64().unwrap() >= 0.0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn admission_limit_holds() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Service::new(2);
    svc.install(load_linker(toy_config(dir.path(), 2)).unwrap());
    let url = start(&svc).await;
    let batch: Vec<Value> = (0..200).map(|i| json!({"name": format!("Garage Rex {i}")})).collect();
    let body = json!({"queries": batch}).to_string();
    let mut tasks = Vec::new();
    for _ in 0..10 {
        let (url, body) = (url.clone(), body.clone());
        tasks.push(tokio::spawn(async move { post(&url, body).await }));
    }
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, 200);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    assert!(svc.high_water_mark() <= 2, "{}", svc.high_water_mark());
    assert!(svc.high_water_mark() >= 1);
    tokio::time::sleep(Duration::from_millis(10)).await;
    assert_eq!(svc.active_requests(), 0);
}
