//! JSON API over gallery search and rollout.
//!
//! The session holds an immutable model and gallery; requests never mutate it.

use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use inbetween_core::dcmoe::{self, rollout, ModelParameters, RolloutStart, TargetPose, MAX_TTA, MIN_TTA};
use inbetween_core::gallery::{
    candidates, chain_guidance, chain_path, place_chain, DurationLabel, GalleryIndex, Query,
    SearchConfig,
};
use inbetween_core::motion::{Skeleton, STYLE_NAMES};
use inbetween_core::rotmath::{Quat, Vec2, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Version of the pose wire format.
pub const POSE_VERSION: u32 = 1;
const MIN_DISTANCE: f64 = 0.1;
const MAX_DISTANCE: f64 = 10.0;

#[derive(Debug)]
pub struct SessionState {
    pub params: ModelParameters,
    pub gallery: GalleryIndex,
    pub search: SearchConfig,
    /// Candidates per gallery query.
    pub count: usize,
    pub model_version: u32,
    pub skeleton: Skeleton,
}

impl SessionState {
    pub fn new(params: ModelParameters, gallery: GalleryIndex, search: SearchConfig, count: usize) -> SessionState {
        SessionState {
            params,
            gallery,
            search,
            count,
            model_version: dcmoe::io::VERSION,
            skeleton: Skeleton::humanoid(),
        }
    }
}

pub fn router(state: Arc<SessionState>) -> Router {
    Router::new()
        .route("/api/gallery/query", post(gallery_query))
        .route("/api/inbetween", post(inbetween))
        .route("/api/meta", get(meta))
        .layer(middleware::from_fn(access_log))
        .with_state(state)
}

async fn access_log(req: Request, next: Next) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let t = Instant::now();
    let res = next.run(req).await;
    tracing::info!(
        %method,
        path,
        status = res.status().as_u16(),
        micros = t.elapsed().as_micros() as u64,
        "request"
    );
    res
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status.as_u16())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

impl From<inbetween_core::Error> for ApiError {
    fn from(e: inbetween_core::Error) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    /// Ground position `(x, z)`.
    pub pos: [f64; 2],
    pub facing: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub start: Marker,
    pub target: Marker,
    #[serde(default)]
    pub style: Option<usize>,
    #[serde(default)]
    pub duration_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWire {
    /// `(first frame, end frame)` of each chained gallery trajectory.
    pub ids: Vec<(usize, usize)>,
    pub duration: usize,
    pub label: String,
    /// Radians.
    pub error: f64,
    /// World root points `(x, z)`, one per frame including the start.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub candidates: Vec<CandidateWire>,
    pub alpha: f64,
}

fn v2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

fn check_query(start: Vec2, start_facing: Vec2, end: Vec2, end_facing: Vec2) -> Result<Query, ApiError> {
    let all = [start, start_facing, end, end_facing];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::unprocessable("coordinates must be finite"));
    }
    let d = (end - start).norm();
    if !(MIN_DISTANCE..=MAX_DISTANCE).contains(&d) {
        return Err(ApiError::unprocessable(format!(
            "distance {d:.3} m outside [{MIN_DISTANCE}, {MAX_DISTANCE}] m"
        )));
    }
    Query::between(start, start_facing, end, end_facing)
        .map_err(|_| ApiError::unprocessable("facing vectors must be nonzero"))
}

/// Candidate chains between two markers, shared by the API and the CLI.
pub fn query_candidates(
    g: &GalleryIndex,
    search: &SearchConfig,
    count: usize,
    req: &QueryRequest,
) -> Result<QueryResponse, ApiError> {
    let label = match req.duration_label.as_deref() {
        None => None,
        Some(s) => Some(
            DurationLabel::parse(s)
                .ok_or_else(|| ApiError::unprocessable(format!("unknown duration label `{s}`")))?,
        ),
    };
    let origin = v2(req.start.pos);
    let q = check_query(origin, v2(req.start.facing), v2(req.target.pos), v2(req.target.facing))?
        .with_style(req.style);
    let found = candidates(g, &q, search, count, count * 8)?;
    let candidates = found
        .into_iter()
        .filter(|c| label.is_none_or(|l| c.label == l))
        .map(|c| CandidateWire {
            ids: c.result.ids(),
            duration: c.result.duration(),
            label: c.label.as_str().to_string(),
            error: c.result.error,
            polyline: chain_path(g, &c.result)
                .0
                .into_iter()
                .map(|p| [p.x + origin.x, p.y + origin.y])
                .collect(),
        })
        .collect();
    Ok(QueryResponse {
        candidates,
        alpha: search.alpha,
    })
}

async fn gallery_query(
    State(s): State<Arc<SessionState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<QueryResponse> {
    let Json(req) = body?;
    let res = tokio::task::spawn_blocking(move || query_candidates(&s.gallery, &s.search, s.count, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(res))
}

/// One frame: root position, root facing and local joint rotations (w, x, y, z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseWire {
    pub version: u32,
    pub root: [f64; 3],
    pub facing: [f64; 2],
    pub rotations: Vec<[f64; 4]>,
}

impl PoseWire {
    pub fn new(root: Vec3, facing: Vec2, rotations: &[Quat]) -> PoseWire {
        PoseWire {
            version: POSE_VERSION,
            root: root.to_array(),
            facing: [facing.x, facing.y],
            rotations: rotations.iter().map(|q| q.to_array()).collect(),
        }
    }

    fn check(&self, joints: usize) -> Result<(Vec3, Vec2, Vec<Quat>), ApiError> {
        if self.version != POSE_VERSION {
            return Err(ApiError::unprocessable(format!(
                "pose version {} (expected {POSE_VERSION})",
                self.version
            )));
        }
        if self.rotations.len() != joints {
            return Err(ApiError::unprocessable(format!(
                "{} joint rotations, expected {joints}",
                self.rotations.len()
            )));
        }
        let rots: Vec<Quat> = self.rotations.iter().map(|&a| Quat::from_array(a)).collect();
        let root = Vec3::from_array(self.root);
        let facing = v2(self.facing);
        if !root.is_finite() || !facing.is_finite() || facing.norm() < 1e-9 {
            return Err(ApiError::unprocessable("root and facing must be finite and nonzero"));
        }
        if rots.iter().any(|q| !q.is_finite() || q.norm() < 1e-6) {
            return Err(ApiError::unprocessable("rotations must be finite and nonzero"));
        }
        Ok((root, facing, rots))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InbetweenRequest {
    pub start: PoseWire,
    pub target: PoseWire,
    pub chain: Vec<(usize, usize)>,
    pub style: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameWire {
    pub root: [f64; 3],
    pub rotations: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InbetweenResponse {
    pub version: u32,
    pub tta0: usize,
    pub frame_time: f64,
    pub frames: Vec<FrameWire>,
}

pub fn run_inbetween(s: &SessionState, req: &InbetweenRequest) -> Result<InbetweenResponse, ApiError> {
    let nj = s.skeleton.len();
    let (root0, facing0, rots0) = req.start.check(nj)?;
    let (root1, facing1, rots1) = req.target.check(nj)?;
    if req.style >= s.params.config.n_styles {
        return Err(ApiError::unprocessable(format!("unknown style {}", req.style)));
    }
    if req.chain.is_empty() {
        return Err(ApiError::unprocessable("empty candidate chain"));
    }
    let q = check_query(root0.ground(), facing0, root1.ground(), facing1)?;
    let placed = place_chain(&s.gallery, &req.chain, &q)?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "candidate chain not in gallery"))?;
    let tta0 = placed.duration();
    if !(MIN_TTA..=MAX_TTA).contains(&tta0) {
        return Err(ApiError::unprocessable(format!(
            "chain lasts {tta0} frames, rollouts take {MIN_TTA} to {MAX_TTA}"
        )));
    }
    let guidance = chain_guidance(&s.gallery, &placed, root0.ground(), Some(root1.ground()));
    let start = RolloutStart::from_pose(&s.skeleton, req.style, root0, &rots0)?;
    let target = TargetPose::from_local(&s.skeleton, root1, &rots1)?;
    let clip = rollout(&start, &target, &guidance, &s.params)?;
    let frames = (0..clip.num_frames())
        .map(|f| FrameWire {
            root: clip.root_positions[f].to_array(),
            rotations: clip.local(f).iter().map(|q| q.to_array()).collect(),
        })
        .collect();
    Ok(InbetweenResponse {
        version: POSE_VERSION,
        tta0,
        frame_time: clip.frame_time,
        frames,
    })
}

async fn inbetween(
    State(s): State<Arc<SessionState>>,
    body: Result<Json<InbetweenRequest>, JsonRejection>,
) -> ApiResult<InbetweenResponse> {
    let Json(req) = body?;
    let res = tokio::task::spawn_blocking(move || run_inbetween(&s, &req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(res))
}

async fn meta(State(s): State<Arc<SessionState>>) -> Json<serde_json::Value> {
    let cfg = &s.params.config;
    let styles: Vec<&str> = (0..cfg.n_styles)
        .map(|i| STYLE_NAMES.get(i).copied().unwrap_or("custom"))
        .collect();
    Json(json!({
        "styles": styles,
        "gallery": {
            "trajectories": s.gallery.len(),
            "bins": s.gallery.bins.len(),
            "config": s.gallery.config,
        },
        "model": {
            "kind": dcmoe::io::KIND,
            "version": s.model_version,
            "experts": cfg.experts,
            "n_styles": cfg.n_styles,
        },
        "search": s.search,
        "candidates": s.count,
    }))
}
