mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pictoforge::prototyper::{Limits, Session};
use pictoforge::repository::RepoStore;
use pictoforge::workbench::{router, serve, AppState, CheckReport, WorkbenchConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;

struct Fixture {
    _dir: tempfile::TempDir,
    repo: RepoStore,
    state: Arc<AppState>,
}

fn setup() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let repo = RepoStore::init(dir.path().join("repo")).unwrap();
    repo.lock("ann").unwrap();
    repo.commit(&fixture("gate.use"), "ann", "gate").unwrap();
    repo.commit(&fixture("login.use"), "ann", "login").unwrap();
    let state = AppState::new(repo.clone(), Limits::default());
    Fixture { _dir: dir, repo, state }
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn model_endpoint_equals_export() {
    let f = setup();
    let (st, body) = call_json(&f.state, "GET", "/api/model", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body, f.repo.export_value(2).unwrap());
    let (_, body) = call_json(&f.state, "GET", "/api/model?rev=1", None).await;
    assert_eq!(body, f.repo.export_value(1).unwrap());
    let (st, body) = call_json(&f.state, "GET", "/api/model?rev=7", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "NO_SUCH_REVISION");
    assert_eq!(call(&f.state, "GET", "/api/model?rev=x", None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn check_endpoint_equals_checker() {
    let f = setup();
    for name in ["kiosk.use", "broken.use", "library.use"] {
        let (st, body) =
            call_json(&f.state, "POST", "/api/check", Some(json!({"source": fixture_text(name), "name": name}))).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(body, serde_json::to_value(CheckReport::of(&fixture(name))).unwrap(), "{name}");
    }
    let (_, body) = call_json(&f.state, "POST", "/api/check", Some(json!({"rev": 1}))).await;
    assert_eq!(body, serde_json::to_value(CheckReport::of(&f.repo.checkout(1).unwrap())).unwrap());
    let (st, body) = call_json(&f.state, "POST", "/api/check", Some(json!({"source": "diagram {"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["code"].as_str().unwrap().starts_with("SYN"));
    assert_eq!(call(&f.state, "POST", "/api/check", Some(json!([1]))).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn session_endpoints_equal_direct_session() {
    let f = setup();
    let model = fixture("login.use");
    let (st, created) = call_json(&f.state, "POST", "/api/sessions", Some(json!({"root": "login"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();
    let mut direct = Session::start(&model, "login").unwrap();
    assert_eq!(created["transcript"], serde_json::to_value(direct.transcript()).unwrap());

    for line in fixture_text("login.script").lines() {
        let before = direct.transcript().len();
        direct.input(line).unwrap();
        let (st, res) = call_json(&f.state, "POST", &format!("/api/sessions/{id}/input"), Some(json!({"line": line}))).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(res["events"], serde_json::to_value(&direct.transcript()[before..]).unwrap());
        assert_eq!(res["status"], direct.status().as_str());
        assert_eq!(res["current"], direct.current());
    }
    let (_, v) = call_json(&f.state, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(v["transcript"], serde_json::to_value(direct.transcript()).unwrap());
    assert_eq!(v["bindings"], serde_json::to_value(direct.bindings()).unwrap());
    assert_eq!(v["step_count"], direct.step_count());

    let (st, err) = call_json(&f.state, "POST", &format!("/api/sessions/{id}/input"), Some(json!({"line": "x"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(err["code"], "SESSION_NOT_RUNNING");
}

#[tokio::test]
async fn session_errors_and_isolation() {
    let f = setup();
    let (st, err) = call_json(&f.state, "GET", "/api/sessions/s99", None).await;
    assert_eq!((st, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("NO_SUCH_SESSION")));
    let (st, err) = call_json(&f.state, "POST", "/api/sessions", Some(json!({"root": "nope"}))).await;
    assert_eq!((st, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("NO_SUCH_DIAGRAM")));
    let broken = json!({"root": "d", "source": fixture_text("broken.use")});
    let (st, err) = call_json(&f.state, "POST", "/api/sessions", Some(broken)).await;
    assert_eq!((st, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("MODEL_HAS_ERRORS")));

    let gate = json!({"root": "gate", "rev": 1});
    let (_, a) = call_json(&f.state, "POST", "/api/sessions", Some(gate.clone())).await;
    let (_, b) = call_json(&f.state, "POST", "/api/sessions", Some(gate)).await;
    let (a, b) = (a["id"].as_str().unwrap().to_string(), b["id"].as_str().unwrap().to_string());
    assert_ne!(a, b);
    call(&f.state, "POST", &format!("/api/sessions/{a}/input"), Some(json!({"line": "admin"}))).await;
    let (_, va) = call_json(&f.state, "GET", &format!("/api/sessions/{a}"), None).await;
    let (_, vb) = call_json(&f.state, "GET", &format!("/api/sessions/{b}"), None).await;
    assert_eq!(va["bindings"]["role"], "admin");
    assert_eq!(vb["bindings"], json!({}));
}

#[tokio::test]
async fn idle_sessions_expire() {
    let f = setup();
    let state = AppState::with_idle_timeout(f.repo.clone(), Limits::default(), Duration::from_millis(1));
    let (_, v) = call_json(&state, "POST", "/api/sessions", Some(json!({"root": "login"}))).await;
    assert_eq!(state.session_count(), 1);
    std::thread::sleep(Duration::from_millis(20));
    assert_eq!(state.expire_idle(), 1);
    let (st, _) = call_json(&state, "GET", &format!("/api/sessions/{}", v["id"].as_str().unwrap()), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn events_stream_equals_log() {
    let f = setup();
    call(&f.state, "POST", "/api/check", Some(json!({"rev": 2}))).await;
    let (st, bytes) = call(&f.state, "GET", "/api/events?from=2&follow=false", None).await;
    assert_eq!(st, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    let data: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("data: ")).collect();
    let expected: Vec<String> = f.repo.events().read_from(2).unwrap().iter().map(|e| e.to_line()).collect();
    assert_eq!(data, expected);
    assert_eq!(expected.len(), 2);
    assert!(expected[1].contains("|CHECK_COMPLETED|login.use|"));
    assert_eq!(call(&f.state, "GET", "/api/events?from=0", None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn finished_session_is_announced() {
    let f = setup();
    let (_, v) = call_json(&f.state, "POST", "/api/sessions", Some(json!({"root": "gate", "rev": 1}))).await;
    let id = v["id"].as_str().unwrap();
    for line in ["admin", "enter", "quit"] {
        call(&f.state, "POST", &format!("/api/sessions/{id}/input"), Some(json!({"line": line}))).await;
    }
    let last = f.repo.events().read_from(1).unwrap().pop().unwrap();
    assert_eq!(last.kind.as_str(), "SESSION_ENDED");
    assert_eq!(last.payload["status"], "FINISHED");
}

#[tokio::test]
async fn serve_binds_and_reports_port_in_use() {
    let f = setup();
    let blocker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = blocker.local_addr().unwrap().port();
    let mut config = WorkbenchConfig::new(f.repo.root());
    config.listen_port = port;
    let err = serve(config.clone(), |_| {}).await.err().unwrap();
    assert_eq!(err.code(), "PORT_IN_USE");
    drop(blocker);
    let (tx, rx) = std::sync::mpsc::channel();
    let server = serve(config, move |a| tx.send(a).unwrap()).await.unwrap();
    assert_eq!(rx.recv().unwrap().port(), port);
    let handle = tokio::spawn(server);
    let resp = tokio::task::spawn_blocking(move || {
        use std::io::{Read, Write};
        let mut stream = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
        stream.write_all(b"GET /api/sessions/zz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut resp = String::new();
        stream.read_to_string(&mut resp).unwrap();
        resp
    })
    .await
    .unwrap();
    assert!(resp.starts_with("HTTP/1.1 404"), "{resp}");
    handle.abort();
    let mut low = WorkbenchConfig::new(f.repo.root());
    low.listen_port = 80;
    assert_eq!(serve(low, |_| {}).await.err().unwrap().code(), "BAD_PORT");
}
