#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use relfeed::corpus::{synthesize_corpus, Corpus, SynthConfig};
use relfeed::engine::EngineConfig;
use relfeed_server::service::{router, AppState};
use relfeed_server::ServiceConfig;
use serde_json::Value;
use tower::ServiceExt;

/// A synthetic corpus whose schema also allows `attr0 = "9"`, which no record has.
pub fn corpus(n: usize) -> Arc<Corpus> {
    let c = synthesize_corpus(&SynthConfig::standard(n, 3, 0.1, 5)).unwrap();
    let mut schema = c.schema().clone();
    schema.get_mut("attr0").unwrap().push("9".into());
    Arc::new(Corpus::new(c.records().to_vec(), c.views().to_vec(), schema, c.sensitive_attributes().to_vec()).unwrap())
}

pub fn config(root: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: root.join("sessions"),
        image_root: root.join("images"),
        engine: EngineConfig { epochs: 3, ..Default::default() },
        ..Default::default()
    }
}

pub fn app(cfg: &ServiceConfig, corpus: Arc<Corpus>) -> Router {
    router(Arc::new(AppState::new(cfg, corpus).unwrap()), &cfg.cors_origins)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes, _) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let json = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, json)
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>, Option<String>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes, ctype)
}

pub fn batch_ids(v: &Value) -> Vec<String> {
    v["batch"]
        .as_array()
        .or_else(|| v["last_batch"].as_array())
        .unwrap()
        .iter()
        .map(|b| b["id"].as_str().unwrap().to_string())
        .collect()
}
