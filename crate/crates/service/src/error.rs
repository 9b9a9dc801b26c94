use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use swr_core::forecast::ForecastError;
use swr_core::router::RouteError;

use crate::pipeline::PipelineError;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub const REHEARSAL_LIMIT_MESSAGE: &str = "rehearsal limit reached";

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {kind} {id:?}"), json!({ "kind": kind, "id": id }))
    }

    pub fn unprocessable(message: impl Into<String>, detail: Value) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message, detail)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }

    pub fn rehearsal_limit(route_id: &str, limit: usize) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "rehearsal_limit",
            REHEARSAL_LIMIT_MESSAGE,
            json!({ "route_id": route_id, "limit": limit }),
        )
    }

    pub fn with_detail(mut self, key: &str, value: Value) -> Self {
        match &mut self.body.detail {
            Value::Object(m) => {
                m.insert(key.into(), value);
            }
            other => {
                let prev = std::mem::take(other);
                let mut m = serde_json::Map::new();
                if !prev.is_null() {
                    m.insert("info".into(), prev);
                }
                m.insert(key.into(), value);
                *other = Value::Object(m);
            }
        }
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<RouteError> for ApiError {
    fn from(e: RouteError) -> Self {
        let msg = e.to_string();
        match e {
            RouteError::Unreachable => Self::new(StatusCode::CONFLICT, "unreachable", msg, Value::Null),
            RouteError::OriginOnLand | RouteError::DestinationOnLand => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "land_endpoint",
                msg,
                json!({ "snap_radius_cells": swr_core::router::SNAP_RADIUS_CELLS }),
            ),
            RouteError::OutsideGrid { which, lat, lon } => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "outside_grid",
                msg,
                json!({ "which": which, "lat": lat, "lon": lon }),
            ),
            _ => Self::unprocessable(msg, Value::Null),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::NotFound { kind, name } => Self::not_found(kind, &name),
            PipelineError::Invalid(_) | PipelineError::Grid(_) | PipelineError::Assimilation(_) => {
                Self::unprocessable(msg, Value::Null)
            }
            PipelineError::Route(r) => r.into(),
            PipelineError::Forecast(f) => match f {
                ForecastError::BlowUp { step, detail } => Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "blow_up",
                    msg,
                    json!({ "step": step, "diagnostic": detail }),
                ),
                ForecastError::Io(_) => Self::internal(msg),
                _ => Self::unprocessable(msg, Value::Null),
            },
            PipelineError::Analytics(_) => Self::unprocessable(msg, Value::Null),
            PipelineError::Io(_) => Self::internal(msg),
        }
    }
}
