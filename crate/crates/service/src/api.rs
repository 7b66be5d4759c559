//! JSON-over-HTTP surface of [`Service`].
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/api/v1/session` | `{screen_w, screen_h, locale}` | `{session_id, state, playlist, reaction}` |
//! | GET | `/api/v1/session/{id}` | | `{session_id, state, cursor, playlist}` |
//! | POST | `/api/v1/session/{id}/reaction` | `{attempts: [{samples}]}` | `{pass, state}` |
//! | POST | `/api/v1/session/{id}/captcha` | `{checkpoint, answer}` | `{pass, retries_left, state}` |
//! | GET | `/api/v1/session/{id}/captcha/{checkpoint}/audio` | | audio bytes |
//! | POST | `/api/v1/session/{id}/view` | `{video_id, rating, samples, video_rect}` | `{accepted, slot, flags, state}` |
//! | GET | `/api/v1/video/{id}` | | video bytes, range requests supported |

use std::path::Path as FsPath;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use saliency_core::qc::RectTrajectory;
use saliency_core::session::{Checkpoint, SessionError, SessionState, ViewFlags, ViewerSession};
use saliency_core::types::Rect;
use serde::{Deserialize, Serialize};
use tower::ServiceExt;
use tower_http::services::ServeFile;

use crate::service::{Service, ServiceError, ViewUpload};
use crate::store::StoreError;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::UnknownSession | ServiceError::UnknownVideo(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Session(SessionError::Duplicate { .. }) | ServiceError::Store(StoreError::ViewExists { .. }) => {
                (StatusCode::CONFLICT, "conflict")
            }
            ServiceError::Session(SessionError::Protocol { .. } | SessionError::OutOfOrder { .. }) => {
                (StatusCode::CONFLICT, "protocol_error")
            }
            ServiceError::Session(SessionError::BadRating(_)) | ServiceError::Invalid(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation_error")
            }
            ServiceError::Session(_) | ServiceError::Store(_) | ServiceError::Catalog(_) => {
                tracing::error!(error = %e, "internal error");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.code, message: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub screen_w: u32,
    pub screen_h: u32,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en".into()
}

/// Playlist entry as shown to the client: no validation flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDescriptor {
    pub video_id: String,
    pub url: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub playlist: Vec<VideoDescriptor>,
    pub reaction: RectTrajectory,
    pub captcha_audio: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub cursor: usize,
    pub playlist: Vec<VideoDescriptor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptPayload {
    pub samples: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionRequest {
    pub attempts: Vec<AttemptPayload>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionResponse {
    pub pass: bool,
    pub state: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptchaRequest {
    pub checkpoint: Checkpoint,
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptchaResponse {
    pub pass: bool,
    pub retries_left: u32,
    pub state: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewRequest {
    pub video_id: String,
    pub rating: u8,
    pub samples: Vec<[f64; 3]>,
    pub video_rect: Rect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewResponse {
    pub accepted: bool,
    pub slot: usize,
    pub flags: ViewFlags,
    pub state: String,
}

fn reason(state: SessionState) -> Option<String> {
    match state {
        SessionState::Rejected { reason } => Some(reason.as_str().to_string()),
        _ => None,
    }
}

fn descriptors(service: &Service, session: &ViewerSession) -> Vec<VideoDescriptor> {
    session
        .playlist
        .iter()
        .map(|e| VideoDescriptor {
            video_id: e.video_id.clone(),
            url: format!("/api/v1/video/{}", e.video_id),
            duration_ms: service.catalog().videos.get(&e.video_id).map_or(0, |v| v.duration_ms),
        })
        .collect()
}

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(
    service: &Arc<Service>,
    f: impl FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    let service = service.clone();
    tokio::task::spawn_blocking(move || f(&service)).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })?
    .map_err(ApiError::from)
}

async fn create_session(
    State(service): State<Arc<Service>>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<Response, ApiError> {
    let created =
        blocking(&service, move |s| s.create_session(req.screen_w, req.screen_h, &req.locale)).await?;
    let session = &created.session;
    let id = &session.session_id;
    let body = CreateSessionResponse {
        session_id: id.clone(),
        state: session.state.name().to_string(),
        reason: reason(session.state),
        playlist: descriptors(&service, session),
        reaction: created.trajectory,
        captcha_audio: ["start", "middle"].iter().map(|c| format!("/api/v1/session/{id}/captcha/{c}/audio")).collect(),
    };
    let status = if session.is_rejected() { StatusCode::FORBIDDEN } else { StatusCode::CREATED };
    Ok((status, Json(body)).into_response())
}

async fn session_status(State(service): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<SessionStatus> {
    let session = blocking(&service, move |s| s.session(&id)).await?;
    Ok(Json(SessionStatus {
        session_id: session.session_id.clone(),
        state: session.state.name().to_string(),
        reason: reason(session.state),
        cursor: session.cursor(),
        playlist: descriptors(&service, &session),
    }))
}

async fn submit_reaction(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<ReactionRequest>,
) -> ApiResult<ReactionResponse> {
    let attempts: Vec<Vec<[f64; 3]>> = req.attempts.into_iter().map(|a| a.samples).collect();
    let (pass, state) = blocking(&service, move |s| s.submit_reaction(&id, &attempts)).await?;
    Ok(Json(ReactionResponse { pass, state: state.name().to_string() }))
}

async fn submit_captcha(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<CaptchaRequest>,
) -> ApiResult<CaptchaResponse> {
    let out = blocking(&service, move |s| s.submit_captcha(&id, req.checkpoint, &req.answer)).await?;
    Ok(Json(CaptchaResponse { pass: out.pass, retries_left: out.retries_left, state: out.state.name().to_string() }))
}

async fn submit_view(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(req): Json<ViewRequest>,
) -> ApiResult<ViewResponse> {
    let upload = ViewUpload { video_id: req.video_id, rating: req.rating, samples: req.samples, video_rect: req.video_rect };
    let out = blocking(&service, move |s| s.submit_view(&id, upload)).await?;
    Ok(Json(ViewResponse { accepted: true, slot: out.slot, flags: out.flags, state: out.state.name().to_string() }))
}

async fn serve_file(path: &FsPath, request: Request) -> Response {
    match ServeFile::new(path).oneshot(request).await {
        Ok(r) => r.map(Body::new),
        Err(e) => ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: e.to_string() }
            .into_response(),
    }
}

fn not_found(what: String) -> Response {
    ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: what }.into_response()
}

async fn video(State(service): State<Arc<Service>>, Path(id): Path<String>, request: Request) -> Response {
    match service.video_file(&id) {
        Some(path) => serve_file(path, request).await,
        None => not_found(format!("unknown video {id}")),
    }
}

async fn captcha_audio(
    State(service): State<Arc<Service>>,
    Path((id, checkpoint)): Path<(String, String)>,
    request: Request,
) -> Response {
    let checkpoint = match checkpoint.as_str() {
        "start" => Checkpoint::Start,
        "middle" => Checkpoint::Middle,
        other => return not_found(format!("unknown checkpoint {other}")),
    };
    match blocking(&service, move |s| s.captcha_audio(&id, checkpoint)).await {
        Ok(Some(path)) => serve_file(&path, request).await,
        Ok(None) => not_found("no audio for this checkpoint".into()),
        Err(e) => e.into_response(),
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/v1/session", post(create_session))
        .route("/api/v1/session/{id}", get(session_status))
        .route("/api/v1/session/{id}/reaction", post(submit_reaction))
        .route("/api/v1/session/{id}/captcha", post(submit_captcha))
        .route("/api/v1/session/{id}/captcha/{checkpoint}/audio", get(captcha_audio))
        .route("/api/v1/session/{id}/view", post(submit_view))
        .route("/api/v1/video/{id}", get(video))
        .layer(tower_http::trace::TraceLayer::new_for_http())
        .with_state(service)
}

/// Binds and serves until the process is stopped.
pub async fn serve(service: Arc<Service>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(service)).await
}
