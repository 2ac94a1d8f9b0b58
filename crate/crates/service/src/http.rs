// SPDX-License-Identifier: MIT OR Apache-2.0

//! HTTP routes. Annotators authenticate with `Authorization: Bearer <token>`
//! using the token returned by `POST /api/register`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::State;
use axum::http::HeaderMap;
use axum::routing::{get, post};
use axum::{Json, Router};
use cpdbench_core::AnnotationDb;
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::service::{Ack, IntroFeedback, IntroNext, Marks, Registration, Service, TaskPayload};

pub type Shared = Arc<Mutex<Service>>;

#[derive(Debug, Deserialize)]
pub struct IntroSubmission {
    pub demo_id: String,
    #[serde(flatten)]
    pub marks: Marks,
}

#[derive(Debug, Deserialize)]
pub struct AnnotationSubmission {
    pub task_id: String,
    #[serde(flatten)]
    pub marks: Marks,
}

fn lock(shared: &Shared) -> MutexGuard<'_, Service> {
    // A panic inside a handler leaves the state consistent: events are
    // applied only after they are persisted.
    shared.lock().unwrap_or_else(|p| p.into_inner())
}

fn bearer(headers: &HeaderMap) -> Result<&str, ServiceError> {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or(ServiceError::Unauthorized)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn register(State(s): State<Shared>) -> Result<Json<Registration>, ServiceError> {
    lock(&s).register().map(Json)
}

async fn intro_next(State(s): State<Shared>, headers: HeaderMap) -> Result<Json<IntroNext>, ServiceError> {
    let svc = lock(&s);
    let who = svc.authenticate(bearer(&headers)?)?;
    Ok(Json(svc.intro_next(&who)))
}

async fn intro_submit(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<IntroSubmission>,
) -> Result<Json<IntroFeedback>, ServiceError> {
    let mut svc = lock(&s);
    let who = svc.authenticate(bearer(&headers)?)?;
    svc.submit_intro(&who, &body.demo_id, &body.marks).map(Json)
}

async fn task(State(s): State<Shared>, headers: HeaderMap) -> Result<Json<Option<TaskPayload>>, ServiceError> {
    let mut svc = lock(&s);
    let who = svc.authenticate(bearer(&headers)?)?;
    svc.next_assignment(&who).map(Json)
}

async fn annotate(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<AnnotationSubmission>,
) -> Result<Json<Ack>, ServiceError> {
    let mut svc = lock(&s);
    let who = svc.authenticate(bearer(&headers)?)?;
    svc.submit_annotation(&who, &body.task_id, &body.marks).map(Json)
}

async fn export(State(s): State<Shared>, headers: HeaderMap) -> Result<Json<AnnotationDb>, ServiceError> {
    let svc = lock(&s);
    svc.check_admin(bearer(&headers)?)?;
    Ok(Json(svc.export()))
}

/// Builds the router; static files under `assets` are served for any
/// path outside `/api`.
pub fn router(service: Shared, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/register", post(register))
        .route("/api/intro/next", get(intro_next))
        .route("/api/intro/submit", post(intro_submit))
        .route("/api/task", get(task))
        .route("/api/annotate", post(annotate))
        .route("/api/admin/export", get(export))
        .with_state(service);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, service: Service, assets: Option<PathBuf>) -> std::io::Result<()> {
    let app = router(Arc::new(Mutex::new(service)), assets);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
