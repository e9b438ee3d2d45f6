//! Helpers and the walkthrough scenario shared by the service cassette
//! recorder and the replay tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use autoviz::infographer::IdentityImageProvider;
use autoviz::llm::{Cassette, ReplayProvider, TextProvider};
use autoviz_service::{router, AppState, Providers, ServiceConfig};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const NL_GOAL: &str = "what is the fuel efficiency per country?";
pub const TITLE_INSTRUCTION: &str = "change the chart title to Fuel efficiency by origin";
pub const SERVICE_CASSETTE: &str = "service.json";

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repo root")
}

pub fn dataset_path(name: &str) -> PathBuf {
    repo_root().join("fixtures/datasets").join(format!("{name}.csv"))
}

pub fn cassette_path(name: &str) -> PathBuf {
    repo_root().join("fixtures/cassettes").join(name)
}

pub fn replay_cassettes() -> Vec<PathBuf> {
    vec![cassette_path("cars_e2e.json"), cassette_path(SERVICE_CASSETTE)]
}

pub fn replay_provider() -> ReplayProvider {
    ReplayProvider::new(Cassette::load_all(&replay_cassettes()).expect("cassettes present; run the recorder"))
}

pub fn config(data_dir: &Path) -> ServiceConfig {
    ServiceConfig { data_dir: data_dir.to_path_buf(), ..ServiceConfig::default() }
}

pub fn providers_with(text: impl TextProvider + 'static) -> Providers {
    Providers::new(Arc::new(text), Arc::new(IdentityImageProvider))
}

/// Service on replayed cassettes with a fresh data directory.
pub struct TestApp {
    pub state: Arc<AppState>,
    pub router: Router,
    pub dir: tempfile::TempDir,
}

impl TestApp {
    pub fn new(providers: Providers, tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = config(dir.path());
        tweak(&mut config);
        let state = AppState::new(config, providers).expect("state");
        Self { router: router(state.clone()), state, dir }
    }

    pub fn replay() -> Self {
        Self::new(providers_with(replay_provider()), |_| {})
    }

    pub async fn send(&self, request: Request<Body>) -> (StatusCode, Value) {
        send(&self.router, request).await
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.send(json_request(Method::POST, uri, body)).await
    }

    pub async fn upload(&self, name: &str, fields: &[(&str, &str)]) -> (StatusCode, Value) {
        let bytes = std::fs::read(dataset_path(name)).unwrap();
        self.send(upload_request(&format!("{name}.csv"), &bytes, fields)).await
    }
}

pub async fn send(router: &Router, request: Request<Body>) -> (StatusCode, Value) {
    let response = router.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
    };
    (status, value)
}

pub fn json_request(method: Method, uri: &str, body: Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

const BOUNDARY: &str = "autoviz-test-boundary";

pub fn upload_request(file_name: &str, bytes: &[u8], fields: &[(&str, &str)]) -> Request<Body> {
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
    }
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\n\
Content-Type: text/csv\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

/// Responses of the walkthrough, in order.
pub struct Walkthrough {
    pub session_id: String,
    pub upload: Value,
    pub visualization: Value,
    pub nl_goal: Value,
    pub evaluation: Value,
    pub refinement: Value,
    pub explanation: Value,
    pub recommendations: Value,
    pub repair: Value,
    pub matplotlib: Value,
}

async fn ok(app: &TestApp, method: Method, uri: &str, body: Value) -> Value {
    let (status, value) = app.send(json_request(method, uri, body)).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {value}");
    value
}

/// Upload cars, visualize goal 0 and a typed goal, then run every
/// follow-up operation on the first chart.
pub async fn walkthrough(app: &TestApp) -> Walkthrough {
    let (status, upload) = app.upload("cars", &[]).await;
    assert_eq!(status, StatusCode::OK, "{upload}");
    let id = upload["session_id"].as_str().unwrap().to_string();
    let base = format!("/sessions/{id}");
    let vis0 = format!("{base}/visualizations/0");

    let visualization =
        ok(app, Method::POST, &format!("{base}/visualize"), json!({ "goal_index": 0, "grammar_id": "vegalite" })).await;
    let nl_goal =
        ok(app, Method::POST, &format!("{base}/visualize"), json!({ "nl_goal": NL_GOAL, "grammar_id": "vegalite" }))
            .await;
    let evaluation = ok(app, Method::POST, &format!("{vis0}/evaluate"), Value::Null).await;
    let refinement =
        ok(app, Method::POST, &format!("{vis0}/refine"), json!({ "instruction": TITLE_INSTRUCTION })).await;
    let explanation = ok(app, Method::POST, &format!("{vis0}/explain"), Value::Null).await;
    let recommendations = ok(app, Method::POST, &format!("{vis0}/recommend"), json!({ "k": 3 })).await;
    let repair = ok(app, Method::POST, &format!("{vis0}/repair"), json!({})).await;
    let matplotlib =
        ok(app, Method::POST, &format!("{base}/visualize"), json!({ "goal_index": 0, "grammar_id": "matplotlib" }))
            .await;

    Walkthrough {
        session_id: id,
        upload,
        visualization,
        nl_goal,
        evaluation,
        refinement,
        explanation,
        recommendations,
        repair,
        matplotlib,
    }
}
