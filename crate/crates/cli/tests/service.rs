use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use inbetween_cli::service::{
    router, CandidateWire, InbetweenRequest, InbetweenResponse, PoseWire, QueryResponse, SessionState,
};
use inbetween_core::dcmoe::{ModelConfig, ModelParameters};
use inbetween_core::gallery::{self, GalleryConfig, GalleryIndex, SearchConfig};
use inbetween_core::motion::{synthetic_corpus, CorpusSpec, MotionClip, Skeleton};
use inbetween_core::rotmath::{Quat, Vec2, Vec3};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    state: Arc<SessionState>,
    clips: Vec<MotionClip>,
    gallery_file_len: usize,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = CorpusSpec {
            styles: 3,
            minutes: 1.0,
            seed: 2,
            ..CorpusSpec::default()
        };
        let mut clips = synthetic_corpus(&spec).unwrap();
        for c in &mut clips {
            c.derive().unwrap();
        }
        let g = GalleryIndex::build(&clips, GalleryConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        gallery::io::save(&path, &g).unwrap();
        let loaded = gallery::io::load(&path).unwrap();
        let params = ModelParameters::init(&ModelConfig::toy(), 4).unwrap();
        Fixture {
            state: Arc::new(SessionState::new(params, loaded.clone(), SearchConfig::default(), 7)),
            clips,
            gallery_file_len: loaded.len(),
        }
    })
}

async fn send(method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut b = Request::builder().method(method).uri(uri);
    if body.is_some() {
        b = b.header("content-type", "application/json");
    }
    let req = b.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let res = router(fixture().state.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post(uri: &str, body: Value) -> (StatusCode, Value) {
    send("POST", uri, Some(body.to_string())).await
}

fn query(start: [f64; 2], target: [f64; 2], facing: [f64; 2]) -> Value {
    json!({
        "start": { "pos": start, "facing": facing },
        "target": { "pos": target, "facing": facing },
    })
}

fn pose(root: Vec3, facing: Vec2, rots: &[Quat]) -> PoseWire {
    PoseWire::new(root, facing, rots)
}

fn rest_request(chain: Vec<(usize, usize)>, to: Vec2) -> InbetweenRequest {
    let c = &fixture().clips[0];
    let start = c.root_positions[0];
    InbetweenRequest {
        start: pose(start, Vec2::new(0.0, 1.0), c.local(0)),
        target: pose(Vec3::new(to.x, start.y, to.y), Vec2::new(0.0, 1.0), c.local(40)),
        chain,
        style: 1,
    }
}

#[tokio::test]
async fn query_returns_candidates_within_alpha() {
    let (status, v) = post("/api/gallery/query", query([0.0, 0.0], [0.0, 2.0], [0.0, 1.0])).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let res: QueryResponse = serde_json::from_value(v).unwrap();
    assert!(!res.candidates.is_empty());
    for c in &res.candidates {
        assert!(c.error <= res.alpha + 1e-12, "{} > {}", c.error, res.alpha);
        assert_eq!(c.polyline.len(), c.duration + 1);
        let last = c.polyline.last().unwrap();
        assert!(last[0].hypot(last[1] - 2.0) < 0.5, "end {last:?}");
    }
    let mut durations: Vec<usize> = res.candidates.iter().map(|c| c.duration).collect();
    let sorted = durations.clone();
    durations.sort_unstable();
    assert_eq!(durations, sorted);
}

#[tokio::test]
async fn query_polyline_follows_the_start_marker() {
    let (_, a) = post("/api/gallery/query", query([0.0, 0.0], [0.0, 2.0], [0.0, 1.0])).await;
    let (_, b) = post("/api/gallery/query", query([3.0, -1.0], [3.0, 1.0], [0.0, 1.0])).await;
    let a: QueryResponse = serde_json::from_value(a).unwrap();
    let b: QueryResponse = serde_json::from_value(b).unwrap();
    assert_eq!(a.candidates.len(), b.candidates.len());
    for (x, y) in a.candidates.iter().zip(&b.candidates) {
        assert_eq!(x.ids, y.ids);
        for (p, q) in x.polyline.iter().zip(&y.polyline) {
            assert!((p[0] + 3.0 - q[0]).abs() < 1e-9 && (p[1] - 1.0 - q[1]).abs() < 1e-9);
        }
    }
}

#[tokio::test]
async fn duration_label_filters_candidates() {
    let mut body = query([0.0, 0.0], [0.0, 2.0], [0.0, 1.0]);
    let (_, all) = post("/api/gallery/query", body.clone()).await;
    let all: QueryResponse = serde_json::from_value(all).unwrap();
    body["duration_label"] = json!("fast");
    let (status, fast) = post("/api/gallery/query", body.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let fast: QueryResponse = serde_json::from_value(fast).unwrap();
    assert!(fast.candidates.iter().all(|c| c.label == "fast"));
    let expected: Vec<&CandidateWire> = all.candidates.iter().filter(|c| c.label == "fast").collect();
    assert_eq!(fast.candidates.len(), expected.len());
    body["duration_label"] = json!("glacial");
    let (status, _) = post("/api/gallery/query", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn malformed_and_out_of_range_queries() {
    let (s, v) = send("POST", "/api/gallery/query", Some("{\"start\": ".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());
    let (s, _) = post("/api/gallery/query", json!({ "start": { "pos": [0, 0] } })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let mut extra = query([0.0, 0.0], [0.0, 2.0], [0.0, 1.0]);
    extra["speed"] = json!(3);
    let (s, _) = post("/api/gallery/query", extra).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v) = post("/api/gallery/query", query([0.0, 0.0], [0.0, 25.0], [0.0, 1.0])).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("distance"));
    let (s, _) = post("/api/gallery/query", query([0.0, 0.0], [0.0, 0.01], [0.0, 1.0])).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post("/api/gallery/query", query([0.0, 0.0], [0.0, 2.0], [0.0, 0.0])).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn inbetween_frame_count_matches_the_chain() {
    let g = &fixture().state.gallery;
    let t = g.trajectories.iter().find(|t| t.duration() == 45 && t.style == 1).unwrap();
    let to = Vec2::new(0.0, t.distance());
    let req = rest_request(vec![t.id], to);
    let body = serde_json::to_value(&req).unwrap();
    let (s, a) = post("/api/inbetween", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let res: InbetweenResponse = serde_json::from_value(a.clone()).unwrap();
    assert_eq!(res.tta0, 45);
    assert_eq!(res.frames.len(), 45);
    assert_eq!(res.version, 1);
    assert!(res.frames.iter().all(|f| f.rotations.len() == Skeleton::humanoid().len()));
    assert!(res.frames.iter().flat_map(|f| f.root).all(f64::is_finite));
    let (_, b) = post("/api/inbetween", body).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn inbetween_rejects_bad_requests() {
    let g = &fixture().state.gallery;
    let t = g.trajectories.iter().find(|t| t.duration() == 30).unwrap();
    let to = Vec2::new(0.0, t.distance().max(0.5));

    let mut missing = rest_request(vec![(usize::MAX - 1, usize::MAX)], to);
    let (s, _) = post("/api/inbetween", serde_json::to_value(&missing).unwrap()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    missing.chain.clear();
    let (s, _) = post("/api/inbetween", serde_json::to_value(&missing).unwrap()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let mut style = rest_request(vec![t.id], to);
    style.style = 99;
    let (s, _) = post("/api/inbetween", serde_json::to_value(&style).unwrap()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let mut version = rest_request(vec![t.id], to);
    version.start.version = 2;
    let (s, v) = post("/api/inbetween", serde_json::to_value(&version).unwrap()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("version"));

    let mut joints = rest_request(vec![t.id], to);
    joints.target.rotations.pop();
    let (s, _) = post("/api/inbetween", serde_json::to_value(&joints).unwrap()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let long: Vec<(usize, usize)> = g.trajectories.iter().filter(|t| t.duration() == 150).take(2).map(|t| t.id).collect();
    let over = rest_request(long, to);
    let (s, _) = post("/api/inbetween", serde_json::to_value(&over).unwrap()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, _) = send("POST", "/api/inbetween", Some("[]".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn meta_describes_the_session() {
    let (s, v) = send("GET", "/api/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    let f = fixture();
    assert_eq!(v["styles"].as_array().unwrap().len(), f.state.params.config.n_styles);
    assert_eq!(v["styles"][0], "idle");
    assert_eq!(v["styles"][1], "walk");
    assert_eq!(v["gallery"]["trajectories"].as_u64().unwrap() as usize, f.gallery_file_len);
    assert_eq!(v["model"]["version"].as_u64().unwrap() as u32, inbetween_core::dcmoe::io::VERSION);
    assert_eq!(v["model"]["experts"], 4);
    assert_eq!(v["candidates"], 7);
    let (s, _) = send("GET", "/api/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn requests_are_stateless() {
    let g = &fixture().state.gallery;
    let t = g.trajectories.iter().find(|t| t.duration() == 30 && t.style == 1).unwrap();
    let reqs: Vec<(&str, Value)> = vec![
        ("/api/gallery/query", query([0.0, 0.0], [0.0, 2.0], [0.0, 1.0])),
        ("/api/gallery/query", query([1.0, 1.0], [2.5, 2.0], [1.0, 0.0])),
        ("/api/inbetween", serde_json::to_value(rest_request(vec![t.id], Vec2::new(0.0, t.distance()))).unwrap()),
        ("/api/gallery/query", query([0.0, 0.0], [0.0, 40.0], [0.0, 1.0])),
    ];
    let mut forward = Vec::new();
    for (u, b) in &reqs {
        forward.push(post(u, b.clone()).await);
    }
    let mut backward = Vec::new();
    for (u, b) in reqs.iter().rev() {
        backward.push(post(u, b.clone()).await);
    }
    backward.reverse();
    assert_eq!(forward, backward);
}
