use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use swr_core::gridio::Channel;
use swr_core::router::presets;

use crate::error::ApiError;
use crate::state::AppState;

pub const API_PREFIX: &str = "/api/v1";

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let detail = json!({ "line": e.line(), "column": e.column() });
        match e.classify() {
            serde_json::error::Category::Data => ApiError::unprocessable(e.to_string(), detail),
            _ => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string(), detail),
        }
    })
}

/// Run blocking work off the async executor.
async fn blocking<T: Send + 'static>(
    state: Shared,
    f: impl FnOnce(&AppState) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn created<T: Serialize>(v: T) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

async fn health(State(s): State<Shared>) -> Json<Value> {
    Json(s.health())
}

async fn ships(State(s): State<Shared>) -> Json<Value> {
    Json(json!({ "ships": s.ships() }))
}

async fn ports() -> Json<Value> {
    Json(json!({ "ports": presets::ports() }))
}

async fn create_forecast(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    let out = blocking(s, move |s| s.create_forecast(req)).await?;
    let status = if out.cached { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(out)).into_response())
}

async fn get_forecast(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.forecast_meta(&id)?).into_response())
}

async fn field_slice(State(s): State<Shared>, Path((id, t, channel)): Path<(String, String, String)>) -> ApiResult<Response> {
    let channel: Channel = channel
        .parse()
        .map_err(|e: String| ApiError::unprocessable(e, json!({ "available": ["VHM0", "VMDRX", "VMDRY", "VTPK"] })))?;
    let t_index = match t.parse::<i64>() {
        Ok(v) if v >= 0 => v as usize,
        Ok(v) => {
            return Err(ApiError::new(
                StatusCode::RANGE_NOT_SATISFIABLE,
                "index_out_of_range",
                format!("t_index {v} is negative"),
                json!({ "t_index": v }),
            ))
        }
        Err(_) => return Err(ApiError::unprocessable(format!("t_index {t:?} is not an integer"), Value::Null)),
    };
    let slice = blocking(s, move |s| s.field_slice(&id, t_index, channel)).await?;
    Ok(Json(slice).into_response())
}

async fn get_job(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.job(&id)?).into_response())
}

async fn create_routes(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    Ok(created(blocking(s, move |s| s.create_routes(req)).await?))
}

async fn get_route(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.route_view(&id)?).into_response())
}

async fn route_geojson(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let e = s.route(&id)?;
    let mut g = e.report.route.to_geojson();
    g["properties"]["route_id"] = json!(id);
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], Json(g)).into_response())
}

#[derive(Debug, Deserialize)]
struct Window {
    t_start: f64,
    t_end: f64,
}

async fn route_segment(
    State(s): State<Shared>,
    Path(id): Path<String>,
    q: Result<Query<Window>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let Query(w) = q.map_err(|e| ApiError::unprocessable(e.body_text(), json!({ "expected": ["t_start", "t_end"] })))?;
    Ok(Json(s.segment(&id, w.t_start, w.t_end)?).into_response())
}

async fn route_rehearsals(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    s.route(&id)?;
    let views = s
        .rehearsal_ids(&id)
        .iter()
        .map(|r| s.route_view(r))
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(json!({ "base_route_id": id, "rehearsals": views })).into_response())
}

async fn create_constraint(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    Ok(created(s.create_constraint(req)?))
}

async fn get_constraint(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.constraint(&id)?).into_response())
}

async fn create_rehearsal(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    Ok(created(blocking(s, move |s| s.create_rehearsal(req)).await?))
}

async fn list_scenarios(State(s): State<Shared>) -> ApiResult<Response> {
    let all = blocking(s, |s| s.scenarios()).await?;
    let items: Vec<Value> = all
        .iter()
        .map(|sc| json!({ "id": sc.id, "name": sc.name, "created_at": sc.created_at, "forecast_id": sc.forecast_id }))
        .collect();
    Ok(Json(json!({ "scenarios": items })).into_response())
}

async fn save_scenario(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req = parse_body(&body)?;
    Ok(created(blocking(s, move |s| s.save_scenario(req)).await?))
}

async fn get_scenario(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(s, move |s| s.scenario(&id)).await?).into_response())
}

async fn delete_scenario(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(s, move |s| s.delete_scenario(&id)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn export_scenario(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let name = format!("attachment; filename=\"{id}.json\"");
    let doc = blocking(s, move |s| s.export_scenario(&id)).await?;
    Ok(([(header::CONTENT_DISPOSITION, name)], Json(doc)).into_response())
}

async fn import_scenario(State(s): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let doc = parse_body(&body)?;
    Ok(created(blocking(s, move |s| s.import_scenario(doc)).await?))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", Value::Null)
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/ships", get(ships))
        .route("/ports", get(ports))
        .route("/forecasts", post(create_forecast))
        .route("/forecasts/{id}", get(get_forecast))
        .route("/forecasts/{id}/fields/{t}/{channel}", get(field_slice))
        .route("/jobs/{id}", get(get_job))
        .route("/routes", post(create_routes))
        .route("/routes/{id}", get(get_route))
        .route("/routes/{id}/geojson", get(route_geojson))
        .route("/routes/{id}/segment", get(route_segment))
        .route("/routes/{id}/rehearsals", get(route_rehearsals))
        .route("/constraints", post(create_constraint))
        .route("/constraints/{id}", get(get_constraint))
        .route("/rehearsals", post(create_rehearsal))
        .route("/scenarios", get(list_scenarios).post(save_scenario))
        .route("/scenarios/import", post(import_scenario))
        .route("/scenarios/{id}", get(get_scenario).delete(delete_scenario))
        .route("/scenarios/{id}/export", get(export_scenario));
    Router::new().nest(API_PREFIX, api).fallback(fallback).with_state(state)
}
