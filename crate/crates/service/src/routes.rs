use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};
use siascor::constraints::{ConstraintError, ConstraintSpec, ShapeConstraintSet};
use siascor::domain::{infer_schema, parse_dataset, Dataset};
use siascor::fidelity::{extract_slice, select_anchors, AnchorPair, InspectionGrid, Scaling};
use siascor::model::TrainedModel;

use crate::jobs::{self, JobPlan, JobRequest};
use crate::store::{Job, JobStatus, Session};
use crate::AppState;

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(m: impl ToString) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, m.to_string())
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

fn conflict(m: impl ToString) -> ApiError {
    ApiError(StatusCode::CONFLICT, m.to_string())
}

fn unprocessable(m: impl ToString) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, m.to_string())
}

fn internal(m: impl ToString) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, m.to_string())
}

fn json_text(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
pub struct DatasetQuery {
    output: Option<String>,
}

pub async fn post_dataset(State(state): State<AppState>, Query(q): Query<DatasetQuery>, body: String) -> ApiResult<Response> {
    let schema = infer_schema(&body, q.output.as_deref()).map_err(bad_request)?;
    let data = parse_dataset(&body, &schema, "upload").map_err(bad_request)?;
    let summary = json!({
        "rows": data.len(),
        "inputs": data.input_box().names(),
        "output": data.output_name(),
    });
    let id = state.lock().add_dataset(data).map_err(internal)?;
    let mut v = summary;
    v["id"] = json!(id);
    Ok((StatusCode::CREATED, Json(v)).into_response())
}

#[derive(Deserialize)]
struct NewSession {
    dataset_id: String,
}

pub async fn post_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewSession = parse_body(&body)?;
    let mut st = state.lock();
    if !st.datasets.contains_key(&req.dataset_id) {
        return Err(not_found("dataset", &req.dataset_id));
    }
    let id = st.fresh_id("s");
    let sess = Session {
        id: id.clone(),
        dataset_id: req.dataset_id,
        initial_model: None,
        constraints: None,
        siascor_models: Vec::new(),
        gpr_models: Vec::new(),
        jobs: Vec::new(),
        running_job: None,
    };
    st.sessions.insert(id.clone(), sess.clone());
    st.persist_session(&id).map_err(internal)?;
    Ok((StatusCode::CREATED, Json(sess)).into_response())
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    let st = state.lock();
    st.sessions.get(&id).cloned().map(Json).ok_or_else(|| not_found("session", &id))
}

fn session_dataset(state: &AppState, id: &str) -> ApiResult<(Session, Dataset)> {
    let st = state.lock();
    let sess = st.sessions.get(id).cloned().ok_or_else(|| not_found("session", id))?;
    let data = st.datasets[&sess.dataset_id].clone();
    Ok((sess, data))
}

fn constraint_status(e: &ConstraintError) -> StatusCode {
    match e {
        ConstraintError::Conflict { .. } | ConstraintError::Duplicate(_) | ConstraintError::BoundsOrder { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        _ => StatusCode::BAD_REQUEST,
    }
}

pub async fn put_constraints(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let specs: Vec<ConstraintSpec> = parse_body(&body)?;
    let (sess, data) = session_dataset(&state, &id)?;
    if let Some(j) = &sess.running_job {
        return Err(conflict(format!("job `{j}` is running; constraints are locked")));
    }
    let set = ShapeConstraintSet::from_specs(&specs, data.input_box())
        .map_err(|e| ApiError(constraint_status(&e), e.to_string()))?;
    let mut st = state.lock();
    let s = st.sessions.get_mut(&id).ok_or_else(|| not_found("session", &id))?;
    if let Some(j) = &s.running_job {
        return Err(conflict(format!("job `{j}` is running; constraints are locked")));
    }
    s.constraints = Some(set.to_specs(data.input_box()));
    st.persist_session(&id).map_err(internal)?;
    Ok(json_text(StatusCode::OK, set.to_json(data.input_box())))
}

fn session_constraints(sess: &Session, data: &Dataset) -> ApiResult<Option<ShapeConstraintSet>> {
    sess.constraints
        .as_ref()
        .map(|specs| ShapeConstraintSet::from_specs(specs, data.input_box()).map_err(internal))
        .transpose()
}

pub async fn get_constraints(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (sess, data) = session_dataset(&state, &id)?;
    let set = session_constraints(&sess, &data)?
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("session `{id}` has no constraints yet")))?;
    Ok(json_text(StatusCode::OK, set.to_json(data.input_box())))
}

pub async fn post_job(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: JobRequest = parse_body(&body)?;
    let plan = JobPlan::parse(req.kind, &req.config).map_err(bad_request)?;
    let (sess, data) = session_dataset(&state, &id)?;
    let set = session_constraints(&sess, &data)?;
    if plan.needs_constraints() && set.is_none() {
        return Err(unprocessable(format!("session `{id}` has no constraints yet")));
    }
    let job_id = {
        let mut st = state.lock();
        let s = st.sessions.get(&id).ok_or_else(|| not_found("session", &id))?;
        if let Some(j) = &s.running_job {
            return Err(conflict(format!("job `{j}` is still running")));
        }
        let job_id = st.fresh_id("j");
        st.jobs.insert(
            job_id.clone(),
            Job {
                id: job_id.clone(),
                session_id: id.clone(),
                kind: req.kind,
                status: JobStatus::Queued,
                log: Vec::new(),
                model_id: None,
                report: None,
                error: None,
            },
        );
        let s = st.sessions.get_mut(&id).expect("checked above");
        s.jobs.push(job_id.clone());
        s.running_job = Some(job_id.clone());
        st.persist_session(&id).map_err(internal)?;
        job_id
    };
    let (st2, jid) = (state.clone(), job_id.clone());
    tokio::task::spawn_blocking(move || jobs::run(st2, jid, plan, req.certify, data, set));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "status": "queued" }))).into_response())
}

#[derive(Deserialize)]
pub struct JobQuery {
    since: Option<usize>,
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<JobQuery>) -> ApiResult<Json<Value>> {
    let st = state.lock();
    let job = st.jobs.get(&id).ok_or_else(|| not_found("job", &id))?;
    let since = q.since.unwrap_or(0).min(job.log.len());
    let mut v = serde_json::to_value(job).expect("job serializes");
    v["log"] = serde_json::to_value(&job.log[since..]).expect("log serializes");
    v["log_offset"] = json!(since);
    v["log_total"] = json!(job.log.len());
    Ok(Json(v))
}

/// The iteration log as line-delimited JSON.
pub async fn get_job_log(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let st = state.lock();
    let job = st.jobs.get(&id).ok_or_else(|| not_found("job", &id))?;
    let mut body = String::new();
    for r in &job.log {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

fn model_for(state: &AppState, sess: &Session, requested: Option<&str>) -> ApiResult<TrainedModel> {
    let id = match requested {
        Some(m) => m.to_string(),
        None => sess
            .initial_model
            .clone()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "session has no initial model yet".into()))?,
    };
    let st = state.lock();
    st.models.get(&id).map(|m| m.model.clone()).ok_or_else(|| not_found("model", &id))
}

#[derive(Deserialize)]
pub struct AnchorQuery {
    model: Option<String>,
    grid: Option<usize>,
    scaling: Option<Scaling>,
}

fn anchors(model: &TrainedModel, data: &Dataset, grid: Option<usize>, scaling: Option<Scaling>) -> ApiResult<AnchorPair> {
    let g = InspectionGrid::new(data.input_box(), grid.unwrap_or(5)).map_err(bad_request)?;
    select_anchors(model, data, &g, scaling.unwrap_or_default()).map_err(bad_request)
}

pub async fn get_anchors(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<AnchorQuery>) -> ApiResult<Json<AnchorPair>> {
    let (sess, data) = session_dataset(&state, &id)?;
    let model = model_for(&state, &sess, q.model.as_deref())?;
    let a = tokio::task::spawn_blocking(move || anchors(&model, &data, q.grid, q.scaling))
        .await
        .map_err(internal)??;
    Ok(Json(a))
}

#[derive(Deserialize)]
pub struct SliceQuery {
    model: Option<String>,
    dims: String,
    anchor: Option<String>,
    samples: Option<usize>,
    grid: Option<usize>,
    scaling: Option<Scaling>,
}

fn parse_dims(dims: &str, data: &Dataset) -> ApiResult<Vec<usize>> {
    dims.split(',')
        .map(str::trim)
        .map(|d| {
            d.parse::<usize>()
                .ok()
                .or_else(|| data.input_box().index_of(d))
                .ok_or_else(|| bad_request(format!("unknown dimension `{d}`")))
        })
        .collect()
}

pub async fn get_slice(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<SliceQuery>) -> ApiResult<Response> {
    let (sess, data) = session_dataset(&state, &id)?;
    let model = model_for(&state, &sess, q.model.as_deref())?;
    let dims = parse_dims(&q.dims, &data)?;
    let text = tokio::task::spawn_blocking(move || -> ApiResult<String> {
        let anchor = match q.anchor.as_deref().unwrap_or("high") {
            "high" => anchors(&model, &data, q.grid, q.scaling)?.x_min,
            "low" => anchors(&model, &data, q.grid, q.scaling)?.x_max,
            s => s
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| bad_request(format!("anchor `{s}` is not high, low or a comma list of numbers")))?,
        };
        let slice = extract_slice(&model, &anchor, &dims, q.samples.unwrap_or(101)).map_err(bad_request)?;
        Ok(slice.to_json())
    })
    .await
    .map_err(internal)??;
    Ok(json_text(StatusCode::OK, text))
}

pub async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let st = state.lock();
    let m = st.models.get(&id).ok_or_else(|| not_found("model", &id))?;
    Ok(json_text(StatusCode::OK, m.text.clone()))
}

pub async fn get_certification(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let st = state.lock();
    let m = st.models.get(&id).ok_or_else(|| not_found("model", &id))?;
    let c = m
        .certification
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("model `{id}` was trained without constraints")))?;
    Ok(Json(c).into_response())
}

#[derive(Deserialize)]
struct PredictRequest {
    points: Vec<Vec<f64>>,
}

pub async fn post_predict(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: PredictRequest = parse_body(&body)?;
    let model = {
        let st = state.lock();
        st.models.get(&id).map(|m| m.model.clone()).ok_or_else(|| not_found("model", &id))?
    };
    let b = model.transform().input_box();
    for p in &req.points {
        if p.len() != b.dim() {
            return Err(bad_request(format!("point has {} coordinates, model has {}", p.len(), b.dim())));
        }
        if !b.contains(p) {
            return Err(bad_request(format!("point {p:?} is outside the input box")));
        }
    }
    Ok(Json(json!({ "predictions": model.predict_many(&req.points) })))
}
