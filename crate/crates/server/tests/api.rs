use std::path::PathBuf;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use hypodb::workspace::{OpenMode, Workspace};
use hypodb_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name);
    std::fs::read_to_string(p).unwrap()
}

fn app(ws: Workspace) -> Router {
    router(AppState::new(ws), None)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    };
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_json(uri: &str, v: Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(v.to_string()))
        .unwrap()
}

fn multipart(uri: &str, fields: &[(&str, &str)], file: &str) -> Request<Body> {
    let boundary = "XhypodbBoundaryX";
    let mut body = String::new();
    for (k, v) in fields {
        body +=
            &format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n{v}\r\n");
    }
    body += &format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"data.csv\"\r\nContent-Type: text/csv\r\n\r\n{file}\r\n--{boundary}--\r\n"
    );
    Request::post(uri)
        .header(
            header::CONTENT_TYPE,
            format!("multipart/form-data; boundary={boundary}"),
        )
        .body(Body::from(body))
        .unwrap()
}

async fn judy(app: &Router) {
    assert_eq!(
        call(
            app,
            post_json("/api/phenomena", json!({"description": "HbO2 saturation"}))
        )
        .await
        .0,
        StatusCode::CREATED
    );
    for (model, name, u, trial) in [
        ("hill.model", "HbO.Hill", 28, "hill_trial.csv"),
        ("adair.model", "HbO.Adair", 31, "adair_trial.csv"),
        ("dash.model", "HbO.Dash", 32, "dash_trial.csv"),
    ] {
        let (s, b) = call(
            app,
            post_json(
                "/api/hypotheses",
                json!({"name": name, "upsilon": u, "structure": fixture(model)}),
            ),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED, "{b}");
        let (s, b) = call(
            app,
            multipart(
                "/api/trials",
                &[("phi", "1"), ("upsilon", &u.to_string())],
                &fixture(trial),
            ),
        )
        .await;
        assert_eq!(s, StatusCode::CREATED, "{b}");
    }
    let (s, b) = call(
        app,
        multipart(
            "/api/observations",
            &[
                ("phi", "1"),
                ("dimension_columns", "pO2"),
                ("source", "surrogate"),
            ],
            &fixture("obs_surrogate.csv"),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{b}");
    assert_eq!(b["warnings"], json!([]));
}

#[tokio::test]
async fn fresh_workspace_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Workspace::init(dir.path().join("w")).unwrap());
    assert_eq!(
        call(&app, get("/api/phenomena")).await,
        (StatusCode::OK, json!([]))
    );
    assert_eq!(
        call(&app, get("/api/hypotheses")).await,
        (StatusCode::OK, json!([]))
    );
    let resp = app.clone().oneshot(get("/")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test]
async fn full_study_loop() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Workspace::init(dir.path().join("w")).unwrap());
    judy(&app).await;

    let (s, fds) = call(&app, get("/api/hypotheses/28/fds")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        fds["sigma_prime"],
        json!(["n p50 φ υ -> KO2", "n p50 pO2 φ υ -> SHbO2"])
    );

    // conditioning before synthesis is refused unless asked to synthesize
    let study =
        json!({"phi": 1, "obs": 1, "sigma": "auto", "filter": {"pO2": {"min": 0, "max": 100}}});
    assert_eq!(
        call(&app, post_json("/api/studies", study.clone())).await.0,
        StatusCode::CONFLICT
    );
    let (s, syn) = call(&app, post_json("/api/synthesize/1", json!({}))).await;
    assert_eq!(s, StatusCode::OK, "{syn}");
    assert_eq!(syn["hypotheses"], json!([28, 31, 32]));

    let (s, y0) = call(&app, get("/api/db/1/relations/Y0")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        y0["rows"][0],
        json!(["x0->1", "1", "28", "0.3333333333333333"])
    );
    let (_, world) = call(&app, get("/api/db/1/relations/world")).await;
    assert_eq!(world["rows"][0], json!(["0", "1", "0.3333333333333333"]));
    assert_eq!(
        call(&app, get("/api/db/1/relations/nope")).await.0,
        StatusCode::NOT_FOUND
    );

    let (s, obs) = call(&app, get("/api/observations/1?filter=pO2:20:40")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(obs["rows"].as_array().unwrap().len(), 3);

    let (s, res) = call(&app, post_json("/api/studies", study)).await;
    assert_eq!(s, StatusCode::CREATED, "{res}");
    let id = res["study_id"].as_u64().unwrap();
    let rows = res["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let total: f64 = rows.iter().map(|r| r["posterior"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let (s, rank) = call(&app, get(&format!("/api/studies/{id}/ranking?top=2"))).await;
    assert_eq!(s, StatusCode::OK);
    let ranked = rank["rows"].as_array().unwrap();
    assert_eq!(ranked.len(), 2);
    assert!(ranked[0]["posterior"].as_f64() >= ranked[1]["posterior"].as_f64());
    for key in ["phi", "upsilon", "prior", "posterior"] {
        assert!(ranked[0].get(key).is_some());
    }
    let (s, full) = call(&app, get(&format!("/api/studies/{id}"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(full, res["result"]);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    let app = app(Workspace::init(&root).unwrap());
    judy(&app).await;
    assert_eq!(
        call(&app, get("/api/hypotheses/99/fds")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, get("/api/studies/7/ranking")).await.0,
        StatusCode::NOT_FOUND
    );
    let (s, b) = call(&app, post_json("/api/phenomena", json!({"phi": 1}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(b["kind"], "conflict");
    let (s, _) = call(
        &app,
        multipart(
            "/api/trials",
            &[("phi", "1"), ("upsilon", "28")],
            &fixture("hill_trial.csv"),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, b) = call(
        &app,
        post_json(
            "/api/hypotheses",
            json!({"name": "bad", "structure": "eq e1: v\neq e2: v\neq e3: u w\n"}),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["kind"], "validation");
    let (s, _) = call(&app, multipart("/api/trials", &[("phi", "1")], "a\n1\n")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &app,
        post_json("/api/studies", json!({"phi": 1, "obs": 1, "sigma": -1})),
    )
    .await;
    assert!(s.is_client_error());

    let ro = router(
        AppState::new(Workspace::open(&root, OpenMode::ReadOnly).unwrap()),
        None,
    );
    assert_eq!(call(&ro, get("/api/phenomena")).await.0, StatusCode::OK);
    assert_eq!(
        call(&ro, post_json("/api/phenomena", json!({}))).await.0,
        StatusCode::LOCKED
    );
}

#[tokio::test]
async fn repeated_study_without_prior_update_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Workspace::init(dir.path().join("w")).unwrap());
    judy(&app).await;
    let q =
        json!({"phi": 1, "obs_id": 1, "sigma": 0.05, "update_prior": false, "auto_synth": true});
    let (_, a) = call(&app, post_json("/api/studies", q.clone())).await;
    let (_, b) = call(&app, post_json("/api/studies", q)).await;
    assert_eq!(a["result"], b["result"]);
}

#[tokio::test]
async fn serves_over_tcp_and_shuts_down() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Workspace::init(dir.path().join("w")).unwrap());
    let listener = hypodb_server::bind("127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(hypodb_server::serve(listener, app, async {
        rx.await.ok();
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /api/phenomena HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    assert!(out.starts_with("HTTP/1.1 200"), "{out}");
    assert!(out.ends_with("[]"));
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
