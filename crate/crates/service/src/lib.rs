//! HTTP backend for the annotation review UI.
//!
//! Frames are read from a KITTI-style dataset root. Pre-annotation and fusion
//! run lazily per frame and the serialized bundle is cached until the frame's
//! annotations change. Writes to one frame are serialized; reads never wait
//! on them.

mod annotations;
mod bundle;
mod config;
mod error;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use palf_core::dataset::{valid_frame_id, DatasetLayout};
use palf_core::io::{save_session, EventKind, TimingEvent};
use palf_core::Box3D;
use serde::Deserialize;

pub use bundle::{BoxSource, FrameBundle, RefitResponse};
pub use config::{ServiceConfig, ENV_DATASET_ROOT, ENV_PORT};
pub use error::{Diagnostic, ServiceError};

#[derive(Default)]
struct FrameSlot {
    write: Arc<tokio::sync::Mutex<()>>,
    /// Bumped on every acknowledged write; a bundle computed under an older
    /// generation is never cached.
    generation: u64,
    bundle: Option<Bytes>,
}

pub struct AppState {
    config: ServiceConfig,
    layout: DatasetLayout,
    frames: Mutex<HashMap<String, FrameSlot>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let mut layout = DatasetLayout::new(config.dataset_root.clone());
        layout.camera_key = config.camera_key.clone();
        layout.default_image_size = config.image_size;
        Arc::new(AppState {
            config,
            layout,
            frames: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn slots(&self) -> std::sync::MutexGuard<'_, HashMap<String, FrameSlot>> {
        self.frames.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn write_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.slots().entry(id.to_string()).or_default().write.clone()
    }

    fn invalidate(&self, id: &str) {
        let mut slots = self.slots();
        let slot = slots.entry(id.to_string()).or_default();
        slot.generation += 1;
        slot.bundle = None;
    }

    fn check_frame(&self, id: &str) -> Result<(), ServiceError> {
        if self.layout.has_frame(id) {
            Ok(())
        } else {
            Err(ServiceError::NotFound(format!("frame `{id}`")))
        }
    }
}

type Shared = Arc<AppState>;

/// Runs blocking frame work off the async workers.
async fn blocking<R: Send + 'static>(
    f: impl FnOnce() -> Result<R, ServiceError> + Send + 'static,
) -> Result<R, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn json_bytes(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::validation(e.to_string()))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/frames", get(list_frames))
        .route("/api/frames/{id}", get(get_bundle))
        .route("/api/frames/{id}/points", get(get_points))
        .route("/api/frames/{id}/image", get(get_image))
        .route("/api/frames/{id}/annotations", put(put_annotations))
        .route("/api/frames/{id}/refit", post(refit))
        .route("/api/frames/{id}/events", post(record_event))
        .route("/api/frames/{id}/metrics", get(get_metrics))
        .with_state(state)
}

/// Binds the configured address and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    config.validate()?;
    let addr = config.socket_addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {addr}: {e}")))?;
    tracing::info!("serving {} on http://{addr}", config.dataset_root.display());
    axum::serve(listener, router(AppState::new(config)))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

async fn list_frames(State(st): State<Shared>) -> Result<Json<Vec<String>>, ServiceError> {
    let st2 = st.clone();
    Ok(Json(blocking(move || Ok(st2.layout.frame_ids()?)).await?))
}

async fn get_bundle(State(st): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let generation = {
        let mut slots = st.slots();
        let slot = slots.entry(id.clone()).or_default();
        if let Some(b) = &slot.bundle {
            return Ok(json_bytes(b.clone()));
        }
        slot.generation
    };
    let (st2, id2) = (st.clone(), id.clone());
    let bundle = blocking(move || bundle::build_bundle(&st2.layout, &st2.config, &id2)).await?;
    let bytes = Bytes::from(serde_json::to_vec(&bundle).map_err(|e| ServiceError::Internal(e.to_string()))?);
    let mut slots = st.slots();
    let slot = slots.entry(id).or_default();
    if slot.generation == generation {
        // a concurrent reader may have filled it first; serve what is cached
        // so repeated reads stay byte-identical
        let cached = slot.bundle.get_or_insert(bytes);
        return Ok(json_bytes(cached.clone()));
    }
    Ok(json_bytes(bytes))
}

async fn get_points(State(st): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let bytes = blocking(move || {
        let cloud = st.layout.load_cloud::<f32>(&id)?.value;
        let mut out = Vec::with_capacity(cloud.len() * 12);
        for p in &cloud.points {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        Ok(out)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn get_image(State(st): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let path = st
        .layout
        .image(&id)
        .ok_or_else(|| ServiceError::NotFound(format!("image for frame `{id}`")))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        _ => "image/jpeg",
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ServiceError::UpstreamData(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn put_annotations(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let boxes = annotations::parse_annotations(&body)?;
    let lock = st.write_lock(&id);
    let _guard = lock.lock().await;
    let st2 = st.clone();
    let id2 = id.clone();
    let stored = blocking(move || {
        let mut session = bundle::session_for_update(&st2.layout, &st2.config, &id2)?;
        session.boxes = boxes;
        palf_core::dataset::ensure_dir(&st2.layout.sessions_dir())?;
        save_session(&session, st2.layout.session(&id2))?;
        Ok(session.to_json_bytes())
    })
    .await?;
    st.invalidate(&id);
    Ok(json_bytes(Bytes::from(stored)))
}

#[derive(Deserialize)]
struct RefitRequest {
    #[serde(rename = "box")]
    bbox: Box3D,
}

async fn refit(State(st): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let req: RefitRequest = parse_json(&body)?;
    let resp = blocking(move || bundle::refit(&st.layout, &st.config, &id, &req.bbox)).await?;
    Ok(Json(resp).into_response())
}

#[derive(Deserialize)]
struct EventRequest {
    kind: String,
    box_id: String,
    timestamp: f64,
}

async fn record_event(
    State(st): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let req: EventRequest = parse_json(&body)?;
    let kind = EventKind::parse(&req.kind).ok_or_else(|| ServiceError::Validation {
        message: format!("unknown event kind `{}`", req.kind),
        diagnostics: vec![Diagnostic {
            index: None,
            id: Some(req.box_id.clone()),
            field: "kind".into(),
            message: "expected one of box_opened, box_confirmed, box_edited, box_created, box_deleted".into(),
        }],
    })?;
    let event = TimingEvent {
        kind,
        box_id: req.box_id,
        timestamp: req.timestamp,
    };
    let lock = st.write_lock(&id);
    let _guard = lock.lock().await;
    let st2 = st.clone();
    let id2 = id.clone();
    let count = blocking(move || {
        let mut session = bundle::session_for_update(&st2.layout, &st2.config, &id2)?;
        session.push_event(event)?;
        palf_core::dataset::ensure_dir(&st2.layout.sessions_dir())?;
        save_session(&session, st2.layout.session(&id2))?;
        Ok(session.timing_events.len())
    })
    .await?;
    st.invalidate(&id);
    Ok((StatusCode::OK, Json(serde_json::json!({ "ack": true, "event_count": count }))).into_response())
}

#[derive(Deserialize)]
struct MetricsQuery {
    gt: Option<String>,
    min_iou: Option<f64>,
}

async fn get_metrics(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<MetricsQuery>,
) -> Result<Response, ServiceError> {
    st.check_frame(&id)?;
    let gt = q.gt.unwrap_or_else(|| "expert".to_string());
    if !valid_frame_id(&gt) {
        return Err(ServiceError::validation(format!("invalid ground-truth name `{gt}`")));
    }
    let min_iou = q.min_iou.unwrap_or(st.config.min_iou3d);
    if !(0.0..=1.0).contains(&min_iou) {
        return Err(ServiceError::validation("min_iou must lie in [0, 1]"));
    }
    let report = blocking(move || bundle::metrics(&st.layout, &st.config, &id, &gt, min_iou)).await?;
    Ok(Json(report).into_response())
}
