//! HTTP front ends: the registry service and the `/respond` suspect-model
//! endpoint.
//!
//! Registry routes:
//!
//! | route                     | body                                              | reply                          |
//! |---------------------------|---------------------------------------------------|--------------------------------|
//! | `POST /register`          | `{"owner_id", "encoder_config"?, "rs_params"?}`   | `{"key", "record"}`            |
//! | `POST /challenges/next`   | `{"owner_id", "count"}`                           | `{"owner_id", "items"}`        |
//! | `GET /record/{owner_id}`  |                                                   | the record                     |
//! | `GET /health`             |                                                   | `{"status": "ok"}`             |
//!
//! Failures reply `{"error": "..."}` with 409 (duplicate owner), 404
//! (unknown owner), 422 (dataset exhausted) or 400 (malformed request).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use keyprint_core::encoder::EncoderConfig;
use keyprint_core::rs_codec::RsParams;
use keyprint_core::suspect_model::SuspectChannel;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use crate::error::RegistryError;
use crate::store::{ChallengeItem, FingerprintRecord, Registry};

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub owner_id: String,
    #[serde(default)]
    pub encoder_config: Option<EncoderConfig>,
    #[serde(default)]
    pub rs_params: Option<RsParams>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    /// The only copy of the key the authority ever hands out.
    pub key: String,
    pub record: FingerprintRecord,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextRequest {
    pub owner_id: String,
    pub count: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct NextResponse {
    pub owner_id: String,
    pub items: Vec<ChallengeItem>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::Conflict(_) => StatusCode::CONFLICT,
            RegistryError::NotFound(_) => StatusCode::NOT_FOUND,
            RegistryError::Exhausted { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            RegistryError::Invalid(_) | RegistryError::Core(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, RegistryError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn register(
    State(reg): State<Arc<Registry>>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> Result<Json<RegisterResponse>, ApiError> {
    let Json(req) = body?;
    let (key, record) = blocking(move || {
        reg.register_owner(&req.owner_id, req.encoder_config.unwrap_or_default(), req.rs_params.unwrap_or_default())
    })
    .await?;
    Ok(Json(RegisterResponse { key: key.as_hex().to_owned(), record }))
}

async fn next_challenges(
    State(reg): State<Arc<Registry>>,
    body: Result<Json<NextRequest>, JsonRejection>,
) -> Result<Json<NextResponse>, ApiError> {
    let Json(req) = body?;
    let owner_id = req.owner_id.clone();
    let items = blocking(move || reg.next_challenges(&req.owner_id, req.count)).await?;
    Ok(Json(NextResponse { owner_id, items }))
}

async fn record(State(reg): State<Arc<Registry>>, Path(owner_id): Path<String>) -> Result<Response, ApiError> {
    let rec = reg.record(&owner_id).ok_or(RegistryError::NotFound(owner_id))?;
    Ok(Json(&*rec).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn registry_router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/challenges/next", post(next_challenges))
        .route("/record/{owner_id}", get(record))
        .route("/health", get(health))
        .with_state(registry)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RespondRequest {
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RespondResponse {
    pub response: String,
}

async fn respond(
    State(channel): State<Arc<dyn SuspectChannel>>,
    body: Result<Json<RespondRequest>, JsonRejection>,
) -> Result<Json<RespondResponse>, ApiError> {
    let Json(req) = body?;
    let response = tokio::task::spawn_blocking(move || channel.respond(&req.prompt))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::BAD_GATEWAY, e.to_string()))?;
    Ok(Json(RespondResponse { response }))
}

/// `POST /respond` in front of any channel.
pub fn respond_router(channel: Arc<dyn SuspectChannel>) -> Router {
    Router::new().route("/respond", post(respond)).route("/health", get(health)).with_state(channel)
}

pub async fn bind(addr: &str) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}

/// Serves `router` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}
