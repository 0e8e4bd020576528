//! HTTP API: `POST /solve`, `POST /wind/sample`, `POST /hazards/cluster`, `GET /health`.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

use cruise_core::hazards::cluster_ellipses;
use cruise_core::ocp::{self, Node};
use cruise_core::windfield::sample_random_field;
use cruise_core::{
    ClusterResult, Domain, Error, PrimitiveCounts, Scenario, SolverConfig, Status, WindField, SCHEMA_VERSION,
};

/// Largest polyline returned unless `full=true`.
pub const MAX_NODES: usize = 500;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Wall-clock cap per solve.
    pub time_cap_s: f64,
    /// Simultaneous solves.
    pub workers: usize,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            time_cap_s: 30.0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cors_origin: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    cfg: Arc<ServiceConfig>,
    slots: Arc<Semaphore>,
}

pub fn router(cfg: ServiceConfig) -> Router {
    let cors = match &cfg.cors_origin {
        Some(o) => match o.parse::<HeaderValue>() {
            Ok(h) => CorsLayer::new().allow_origin(h),
            Err(_) => CorsLayer::new().allow_origin(Any),
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let state = AppState {
        slots: Arc::new(Semaphore::new(cfg.workers.max(1))),
        cfg: Arc::new(cfg),
    };
    Router::new()
        .route("/health", get(health))
        .route("/solve", post(solve))
        .route("/wind/sample", post(wind_sample))
        .route("/hazards/cluster", post(cluster))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    /// Offending scenario field for validation errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

fn reject(code: StatusCode, e: impl ToString, field: Option<String>) -> Response {
    (code, Json(ApiError { error: e.to_string(), field })).into_response()
}

fn from_core(e: Error) -> Response {
    match e {
        Error::Validation { ref field, .. } => {
            let f = field.clone();
            reject(StatusCode::BAD_REQUEST, e, Some(f))
        }
        Error::NotConverged { .. } | Error::Infeasible(_) | Error::IntegrationAbort { .. } => {
            reject(StatusCode::UNPROCESSABLE_ENTITY, e, None)
        }
        _ => reject(StatusCode::BAD_REQUEST, e, None),
    }
}

/// Body parsing with 400 on any malformed document.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| reject(StatusCode::BAD_REQUEST, e, None))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub scenario: Scenario,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Default, Deserialize)]
pub struct SolveQuery {
    #[serde(default)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolylineNode {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub chi: f64,
    pub throttle: f64,
}

impl From<&Node> for PolylineNode {
    fn from(n: &Node) -> Self {
        Self {
            t: n.t,
            x: n.x,
            y: n.y,
            v: n.v,
            chi: n.chi,
            throttle: n.throttle,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub objective: f64,
    pub tf_s: f64,
    pub fuel_burn_kg: f64,
    pub penalty_integral: f64,
    pub chi0_rad: f64,
    pub max_abs_h_plus_ct: Option<f64>,
    pub strategy: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveResponse {
    pub converged: bool,
    pub status: Status,
    pub summary: SolveSummary,
    pub residual: [f64; 3],
    pub residual_norm: f64,
    /// Nodes in the full trajectory before downsampling.
    pub total_nodes: usize,
    pub nodes: Vec<PolylineNode>,
    pub wall_time_s: f64,
}

/// Evenly spaced picks including both ends; the solver's grid is uniform in time.
pub fn downsample<T: Copy>(xs: &[T], max: usize) -> Vec<T> {
    if xs.len() <= max || max < 2 {
        return xs.to_vec();
    }
    let n = xs.len() - 1;
    (0..max)
        .map(|k| xs[(k * n + (max - 1) / 2) / (max - 1)])
        .collect()
}

async fn solve(State(st): State<AppState>, Query(q): Query<SolveQuery>, body: Bytes) -> Response {
    let req: SolveRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if let Err(e) = req.scenario.validate() {
        return from_core(e);
    }
    let mut cfg = req.solver.unwrap_or_default();
    let cap = st.cfg.time_cap_s;
    cfg.time_limit_s = Some(cfg.time_limit_s.map_or(cap, |t| t.min(cap)));

    let Ok(_permit) = st.slots.clone().acquire_owned().await else {
        return reject(StatusCode::SERVICE_UNAVAILABLE, "solver pool closed", None);
    };
    let scenario = req.scenario;
    let work = tokio::task::spawn_blocking(move || {
        let sol = ocp::solve(&scenario, &cfg)?;
        let drift = sol
            .trajectory
            .as_ref()
            .map(|t| ocp::checks::hamiltonian_drift(t, scenario.weights.time_per_s));
        Ok::<_, Error>((sol, drift))
    });
    // the solver polls its own deadline; this bounds a stuck worker
    let outer = Duration::from_secs_f64(cap + 5.0);
    let (sol, drift) = match tokio::time::timeout(outer, work).await {
        Err(_) => return reject(StatusCode::GATEWAY_TIMEOUT, format!("solve exceeded {cap} s"), None),
        Ok(Err(e)) => return reject(StatusCode::INTERNAL_SERVER_ERROR, e, None),
        Ok(Ok(Err(e))) => return from_core(e),
        Ok(Ok(Ok(v))) => v,
    };
    let all: Vec<PolylineNode> = sol
        .trajectory
        .as_ref()
        .map(|t| t.nodes.iter().map(PolylineNode::from).collect())
        .unwrap_or_default();
    let nodes = if q.full { all.clone() } else { downsample(&all, MAX_NODES) };
    let resp = SolveResponse {
        converged: sol.converged(),
        status: sol.status,
        summary: SolveSummary {
            objective: sol.objective,
            tf_s: sol.tf,
            fuel_burn_kg: sol.fuel_burn_kg,
            penalty_integral: sol.penalty_integral,
            chi0_rad: sol.chi0,
            max_abs_h_plus_ct: drift,
            strategy: sol.diagnostics.strategy.clone(),
        },
        residual: sol.residual,
        residual_norm: sol.residual_norm,
        total_nodes: all.len(),
        nodes,
        wall_time_s: sol.wall_time_s,
    };
    let code = match sol.status {
        Status::Converged => StatusCode::OK,
        Status::TimedOut => StatusCode::GATEWAY_TIMEOUT,
        Status::NotConverged => StatusCode::UNPROCESSABLE_ENTITY,
    };
    (code, Json(resp)).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSampleRequest {
    pub seed: u64,
    pub max_speed_mps: f64,
    /// Square domain [0, side]²; ignored when `domain` is given.
    #[serde(default)]
    pub side_m: Option<f64>,
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub counts: Option<PrimitiveCounts>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WindSampleResponse {
    pub domain: Domain,
    pub field: WindField,
}

async fn wind_sample(body: Bytes) -> Response {
    let req: WindSampleRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let domain = req
        .domain
        .unwrap_or_else(|| Domain::square(req.side_m.unwrap_or(1.0e6)));
    match sample_random_field(req.seed, req.max_speed_mps, req.counts.unwrap_or_default(), &domain) {
        Ok(field) => Json(WindSampleResponse { domain, field }).into_response(),
        Err(e) => from_core(e),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRequest {
    pub points: Vec<[f64; 2]>,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

async fn cluster(body: Bytes) -> Response {
    let req: ClusterRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let pts: Vec<(f64, f64)> = req.points.iter().map(|p| (p[0], p[1])).collect();
    match cluster_ellipses(&pts, req.k, req.seed) {
        Ok(r) => Json::<ClusterResult>(r).into_response(),
        Err(e) => from_core(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_keeps_ends_and_bound() {
        let xs: Vec<usize> = (0..=1200).collect();
        let d = downsample(&xs, MAX_NODES);
        assert_eq!(d.len(), MAX_NODES);
        assert_eq!((d[0], *d.last().unwrap()), (0, 1200));
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(downsample(&xs[..300], MAX_NODES).len(), 300);
    }
}
