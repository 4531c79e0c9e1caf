//! HTTP endpoints serving a bundle.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bytes::Bytes;
use progrnet_client::api::ApiError;
use progrnet_core::bundle::MANIFEST_FILE;
use progrnet_core::Bundle;

use crate::error::ServerError;
use crate::log::{PendingEntry, RequestLog};
use crate::throttle::{throttled, ThrottleConfig};

/// The byte content served for a bundle.
#[derive(Debug, Clone)]
pub struct BundleFiles {
    manifest: Bytes,
    stages: Vec<Bytes>,
    singleton: Bytes,
}

impl BundleFiles {
    /// Loads and validates a bundle directory. The manifest is served
    /// exactly as stored on disk.
    pub fn from_dir(dir: &Path) -> Result<Self, ServerError> {
        let bundle = Bundle::read_dir(dir)?;
        let manifest = std::fs::read(dir.join(MANIFEST_FILE))?;
        Ok(Self::assemble(manifest, &bundle))
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self, ServerError> {
        let manifest = bundle.manifest.to_json()?;
        Ok(Self::assemble(manifest, bundle))
    }

    fn assemble(manifest: Vec<u8>, bundle: &Bundle) -> Self {
        Self {
            manifest: manifest.into(),
            stages: bundle.stages.iter().map(|s| Bytes::from(s.bytes.clone())).collect(),
            singleton: bundle.singleton_payload().into(),
        }
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.singleton.len() as u64
    }
}

#[derive(Clone)]
struct AppState {
    files: Arc<BundleFiles>,
    throttle: ThrottleConfig,
    log: RequestLog,
}

/// GET /manifest, /stage/{m} and /weights-singleton, throttled per response.
pub fn bundle_router(files: BundleFiles, throttle: ThrottleConfig, log: RequestLog) -> Router {
    let state = AppState {
        files: Arc::new(files),
        throttle,
        log,
    };
    Router::new()
        .route("/manifest", get(manifest))
        .route("/stage/{m}", get(stage))
        .route("/weights-singleton", get(singleton))
        .fallback(not_found)
        .method_not_allowed_fallback(bad_method)
        .with_state(state)
}

async fn manifest(State(s): State<AppState>, uri: Uri) -> Response {
    let body = s.files.manifest.clone();
    send(&s, uri.path(), body, "application/json")
}

async fn singleton(State(s): State<AppState>, uri: Uri) -> Response {
    let body = s.files.singleton.clone();
    send(&s, uri.path(), body, "application/octet-stream")
}

async fn stage(State(s): State<AppState>, UrlPath(m): UrlPath<String>, uri: Uri) -> Response {
    let Some(stage) = m
        .parse::<usize>()
        .ok()
        .filter(|_| m.bytes().all(|b| b.is_ascii_digit()))
    else {
        return error(
            &s,
            uri.path(),
            StatusCode::BAD_REQUEST,
            format!("stage must be a positive integer, got {m:?}"),
        );
    };
    match stage.checked_sub(1).and_then(|i| s.files.stages.get(i)) {
        Some(body) => send(&s, uri.path(), body.clone(), "application/octet-stream"),
        None => error(
            &s,
            uri.path(),
            StatusCode::NOT_FOUND,
            format!("no stage {stage}, the bundle has {}", s.files.stage_count()),
        ),
    }
}

async fn not_found(State(s): State<AppState>, uri: Uri) -> Response {
    error(
        &s,
        uri.path(),
        StatusCode::NOT_FOUND,
        format!("no such path {}", uri.path()),
    )
}

async fn bad_method(State(s): State<AppState>, uri: Uri) -> Response {
    error(&s, uri.path(), StatusCode::BAD_REQUEST, "only GET is supported".into())
}

fn send(s: &AppState, path: &str, body: Bytes, content_type: &'static str) -> Response {
    let len = body.len();
    let entry = PendingEntry::new(&s.log, path, 200);
    let stream = throttled(body, s.throttle, entry);
    Response::builder()
        .header(header::CONTENT_TYPE, content_type)
        .header(header::CONTENT_LENGTH, len)
        .body(Body::from_stream(stream))
        .expect("static headers are valid")
}

fn error(s: &AppState, path: &str, status: StatusCode, message: String) -> Response {
    let mut entry = PendingEntry::new(&s.log, path, status.as_u16());
    entry.finish();
    (status, Json(ApiError { error: message })).into_response()
}
