//! JSON control API for steering progressive sessions from a UI.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use progrnet_client::api::{ApiError, CreateSession, InputInfo, SessionCreated};
use progrnet_client::{BundleClient, ClientError, ProgressiveSession, SessionController, SessionOptions};
use progrnet_core::LabeledDataset;
use tower_http::cors::CorsLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlConfig {
    /// Number of inputs listed by GET /inputs.
    pub gallery: usize,
    /// Values per thumbnail.
    pub thumbnail_len: usize,
    pub retries: u32,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gallery: 24,
            thumbnail_len: 64,
            retries: 3,
        }
    }
}

/// Session registry behind the control API.
#[derive(Clone)]
pub struct ControlService {
    inputs: Arc<LabeledDataset>,
    sessions: Arc<Mutex<HashMap<String, SessionController>>>,
    config: ControlConfig,
}

impl ControlService {
    pub fn new(inputs: LabeledDataset, config: ControlConfig) -> Self {
        Self {
            inputs: Arc::new(inputs),
            sessions: Arc::default(),
            config,
        }
    }

    /// POST /session, GET /session/{id}, POST /session/{id}/{pause|resume|stop}
    /// and GET /inputs. CORS is open so a browser UI on another origin can
    /// call it.
    pub fn router(&self) -> Router {
        Router::new()
            .route("/inputs", get(inputs))
            .route("/session", post(create))
            .route("/session/{id}", get(state))
            .route("/session/{id}/{action}", post(act))
            .fallback(|| async { api_error(StatusCode::NOT_FOUND, "no such endpoint".into()) })
            .layer(CorsLayer::permissive())
            .with_state(self.clone())
    }

    pub fn session(&self, id: &str) -> Option<SessionController> {
        self.lock().get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.lock().keys().cloned().collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, SessionController>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn input_info(&self, id: usize) -> Option<InputInfo> {
        let (input, label) = self.inputs.get(id)?;
        Some(InputInfo {
            id,
            label,
            shape: input.shape().to_vec(),
            thumbnail: input.data().iter().take(self.config.thumbnail_len).copied().collect(),
        })
    }
}

fn api_error(status: StatusCode, error: String) -> Response {
    (status, Json(ApiError { error })).into_response()
}

async fn inputs(State(svc): State<ControlService>) -> Json<Vec<InputInfo>> {
    let n = svc.config.gallery.min(svc.inputs.len());
    Json((0..n).filter_map(|i| svc.input_info(i)).collect())
}

async fn create(State(svc): State<ControlService>, body: Result<Json<CreateSession>, JsonRejection>) -> Response {
    let request = match body {
        Ok(Json(r)) => r,
        Err(e) => return api_error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let Some((input, _)) = svc.inputs.get(request.input_id) else {
        return api_error(
            StatusCode::BAD_REQUEST,
            format!("unknown input {}, there are {}", request.input_id, svc.inputs.len()),
        );
    };
    let options = SessionOptions {
        concurrent: request.concurrent,
        max_stages: request.max_stages,
        infer_delay: Duration::from_millis(request.infer_delay_ms),
        retries: svc.config.retries,
    };
    let session = ProgressiveSession::start(BundleClient::new(&request.server_url), input.clone(), options);
    let controller = session.controller();
    let id = controller.id();
    svc.lock().insert(id.clone(), controller);
    tracing::info!(%id, server = %request.server_url, input = request.input_id, "session started");
    let sid = id.clone();
    tokio::spawn(async move {
        match session.finish().await {
            Ok(summary) => tracing::info!(id = %sid, status = %summary.state.status, "session ended"),
            Err(e) => tracing::warn!(id = %sid, error = %e, "session failed"),
        }
    });
    (StatusCode::CREATED, Json(SessionCreated { id })).into_response()
}

async fn state(State(svc): State<ControlService>, Path(id): Path<String>) -> Response {
    match svc.session(&id) {
        Some(c) => Json(c.snapshot()).into_response(),
        None => api_error(StatusCode::NOT_FOUND, format!("unknown session {id}")),
    }
}

async fn act(State(svc): State<ControlService>, Path((id, action)): Path<(String, String)>) -> Response {
    let Some(c) = svc.session(&id) else {
        return api_error(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    };
    let result = match action.as_str() {
        "pause" => c.pause(),
        "resume" => c.resume(),
        "stop" => c.stop(),
        _ => return api_error(StatusCode::NOT_FOUND, format!("unknown action {action}")),
    };
    match result {
        Ok(()) => Json(c.snapshot()).into_response(),
        Err(e @ ClientError::InvalidTransition { .. }) => api_error(StatusCode::CONFLICT, e.to_string()),
        Err(e) => api_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
