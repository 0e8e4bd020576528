use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

use cruise_core::ocp::analytic::analytic_min_time_constant_wind;
use cruise_core::ocp::Problem;
use cruise_core::Scenario;
use cruise_service::{router, ServiceConfig, SolveResponse, MAX_NODES};

async fn call(cfg: ServiceConfig, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .header("origin", "http://localhost:5173")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(cfg).oneshot(req).await.unwrap();
    let code = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (code, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn health_reports_versions() {
    let (code, v) = call(ServiceConfig::default(), "GET", "/health", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["schema_version"], 1);
    assert!(v["version"].is_string());
}

#[tokio::test]
async fn nominal_solve_converges_and_downsamples() {
    let mut s = Scenario::nominal();
    s.name.clear();
    let body = json!({ "scenario": s, "solver": { "steps": 800 } });
    let (code, v) = call(ServiceConfig::default(), "POST", "/solve", Some(body.clone())).await;
    assert_eq!(code, StatusCode::OK, "{v}");
    let r: SolveResponse = serde_json::from_value(v).unwrap();
    assert!(r.converged);
    assert_eq!(r.total_nodes, 801);
    assert_eq!(r.nodes.len(), MAX_NODES);
    let last = r.nodes.last().unwrap();
    assert!((last.x - 1e6).abs() < 1e-3 * 1e6 && (last.y - 1e6).abs() < 1e-3 * 1e6);

    let (_, full) = call(ServiceConfig::default(), "POST", "/solve?full=true", Some(body)).await;
    assert_eq!(full["nodes"].as_array().unwrap().len(), 801);
}

#[tokio::test]
async fn zero_wind_min_time_matches_oracle() {
    let mut s = Scenario::basic(7e5, 2e5, 1.0, 0.0);
    s.initial_mass_kg = 115_000.0;
    let vm = Problem::new(&s).unwrap().v_max;
    let (_, tf) = analytic_min_time_constant_wind(7e5, 2e5, 0.0, 0.0, vm).unwrap();
    let (code, v) = call(ServiceConfig::default(), "POST", "/solve", Some(json!({ "scenario": s }))).await;
    assert_eq!(code, StatusCode::OK);
    assert!((v["summary"]["tf_s"].as_f64().unwrap() - tf).abs() < 0.1);
}

#[tokio::test]
async fn invalid_scenarios_are_400_with_field() {
    let mut s = serde_json::to_value(Scenario::nominal()).unwrap();
    s["bounds"]["mach_min"] = json!(0.9);
    s["bounds"]["mach_max"] = json!(0.6);
    let (code, v) = call(ServiceConfig::default(), "POST", "/solve", Some(json!({ "scenario": s }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "bounds.mach_min");
    assert!(v["error"].as_str().unwrap().contains("M_min < M_max"));

    let (code, _) = call(ServiceConfig::default(), "POST", "/solve", Some(json!({ "scenario": 3 }))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn time_cap_gives_504() {
    let cfg = ServiceConfig {
        time_cap_s: 1e-4,
        ..ServiceConfig::default()
    };
    let body = json!({ "scenario": Scenario::nominal() });
    let (code, v) = call(cfg, "POST", "/solve", Some(body)).await;
    assert_eq!(code, StatusCode::GATEWAY_TIMEOUT, "{v}");
    assert_eq!(v["converged"], false);
}

#[tokio::test]
async fn non_convergence_is_422() {
    let body = json!({
        "scenario": Scenario::nominal(),
        "solver": { "max_iter": 1, "fallbacks": false, "tol": 1e-14 }
    });
    let (code, v) = call(ServiceConfig::default(), "POST", "/solve", Some(body)).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["status"], "not_converged");
}

#[tokio::test]
async fn wind_sample_is_deterministic() {
    let body = json!({ "seed": 9, "max_speed_mps": 25.0, "side_m": 5e5 });
    let (c1, a) = call(ServiceConfig::default(), "POST", "/wind/sample", Some(body.clone())).await;
    let (_, b) = call(ServiceConfig::default(), "POST", "/wind/sample", Some(body)).await;
    assert_eq!(c1, StatusCode::OK);
    assert_eq!(a, b);
    // background uniform plus (3, 1, 2) primitives
    assert_eq!(a["field"]["primitives"].as_array().unwrap().len(), 7);
    let (c, _) = call(
        ServiceConfig::default(),
        "POST",
        "/wind/sample",
        Some(json!({ "seed": 1, "max_speed_mps": -1.0 })),
    )
    .await;
    assert_eq!(c, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cluster_checks_k() {
    let pts = json!([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [9.0, 9.0], [10.0, 9.0]]);
    let (c, v) = call(ServiceConfig::default(), "POST", "/hazards/cluster", Some(json!({ "points": pts, "k": 2 }))).await;
    assert_eq!(c, StatusCode::OK);
    assert_eq!(v["hazards"].as_array().unwrap().len(), 2);
    let (c, v) = call(ServiceConfig::default(), "POST", "/hazards/cluster", Some(json!({ "points": pts, "k": 6 }))).await;
    assert_eq!(c, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("exceeds"));
}

#[tokio::test]
async fn cors_header_present() {
    let req = Request::builder()
        .uri("/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = router(ServiceConfig::default()).oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
