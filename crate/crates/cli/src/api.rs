//! HTTP API over the shared artifact functions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use ecoloop_core::model::{ConfigError, Configuration, VariabilityModel};
use ecoloop_core::repository::ProfileRepository;

use crate::artifacts::{self, to_json, AnalysisRequest, Artifact, ArtifactError, SimulationRequest};

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Analysis,
    Simulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub id: String,
    pub kind: RunKind,
    pub status: RunStatus,
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
struct RunTable {
    next: u64,
    runs: HashMap<String, RunDescriptor>,
}

#[derive(Clone)]
pub struct AppState {
    model: Arc<VariabilityModel>,
    repo: Arc<ProfileRepository>,
    runs: Arc<Mutex<RunTable>>,
    permits: Arc<Semaphore>,
}

impl AppState {
    /// `concurrency` bounds the simulations running at once; at least one.
    pub fn new(model: VariabilityModel, repo: ProfileRepository, concurrency: usize) -> Self {
        Self {
            model: Arc::new(model),
            repo: Arc::new(repo),
            runs: Arc::new(Mutex::new(RunTable::default())),
            permits: Arc::new(Semaphore::new(concurrency.max(1))),
        }
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut RunDescriptor)) {
        let mut table = self.runs.lock().expect("run table lock");
        if let Some(run) = table.runs.get_mut(id) {
            f(run);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/model", get(get_model))
        .route("/configurations/validate", post(validate))
        .route("/configurations/propagate", post(propagate))
        .route("/analysis/compare", post(compare))
        .route("/analysis/partition", post(partition))
        .route("/rules/derive", post(derive))
        .route("/simulations", post(start_simulation))
        .route("/simulations/{id}", get(get_simulation))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    /// Constraint violations; the body is the report.
    Unprocessable(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(m) => json_response(StatusCode::BAD_REQUEST, to_json(&ErrorBody { error: &m })),
            ApiError::NotFound(m) => json_response(StatusCode::NOT_FOUND, to_json(&ErrorBody { error: &m })),
            ApiError::Unprocessable(body) => json_response(StatusCode::UNPROCESSABLE_ENTITY, body),
        }
    }
}

impl From<ArtifactError> for ApiError {
    fn from(e: ArtifactError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid request body: {e}")))
}

/// Body of the configuration endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Vec<String>,
}

async fn get_model(State(s): State<AppState>) -> Response {
    json_response(StatusCode::OK, to_json(&s.model.to_document()))
}

async fn validate(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let sel: Selection = parse(&body)?;
    let config = Configuration::from_selection(&s.model, sel.selected).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let report = s
        .model
        .validate_configuration(&config)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    if report.is_valid() {
        Ok(json_response(StatusCode::OK, to_json(&report)))
    } else {
        Err(ApiError::Unprocessable(to_json(&report)))
    }
}

async fn propagate(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let sel: Selection = parse(&body)?;
    match s.model.propagate_selection(sel.selected) {
        Ok(p) => Ok(json_response(StatusCode::OK, to_json(&p))),
        Err(ConfigError::Conflict(report)) => Err(ApiError::Unprocessable(to_json(&report))),
        Err(e) => Err(ApiError::BadRequest(e.to_string())),
    }
}

async fn compare(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AnalysisRequest = parse(&body)?;
    let a = artifacts::analyze(&s.model, &s.repo, &req)?;
    Ok(json_response(StatusCode::OK, a.comparison_json()))
}

async fn partition(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AnalysisRequest = parse(&body)?;
    let a = artifacts::analyze(&s.model, &s.repo, &req)?;
    Ok(json_response(StatusCode::OK, a.partition_json()))
}

async fn derive(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AnalysisRequest = parse(&body)?;
    let a = artifacts::analyze(&s.model, &s.repo, &req)?;
    Ok(json_response(StatusCode::OK, a.rules_json()))
}

async fn start_simulation(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SimulationRequest = parse(&body)?;
    let run = {
        let mut table = s.runs.lock().expect("run table lock");
        table.next += 1;
        let run = RunDescriptor {
            id: format!("sim-{}", table.next),
            kind: RunKind::Simulation,
            status: RunStatus::Pending,
            artifacts: Vec::new(),
            error: None,
        };
        table.runs.insert(run.id.clone(), run.clone());
        run
    };

    let state = s.clone();
    let id = run.id.clone();
    tokio::spawn(async move {
        let _permit = state.permits.clone().acquire_owned().await.expect("semaphore is never closed");
        let (model, repo) = (state.model.clone(), state.repo.clone());
        let outcome = tokio::task::spawn_blocking(move || artifacts::simulate(&model, &repo, &req)).await;
        state.update(&id, |run| match outcome {
            Ok(Ok(sim)) => {
                run.status = RunStatus::Done;
                run.artifacts = sim.files;
            }
            Ok(Err(e)) => {
                run.status = RunStatus::Failed;
                run.error = Some(e.to_string());
            }
            Err(e) => {
                run.status = RunStatus::Failed;
                run.error = Some(format!("simulation task failed: {e}"));
            }
        });
    });
    Ok(json_response(StatusCode::ACCEPTED, to_json(&run)))
}

async fn get_simulation(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let table = s.runs.lock().expect("run table lock");
    match table.runs.get(&id) {
        Some(run) => Ok(json_response(StatusCode::OK, to_json(run))),
        None => Err(ApiError::NotFound(format!("no run `{id}`"))),
    }
}
