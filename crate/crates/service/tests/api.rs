use std::path::Path;

use axum::body::{Body, Bytes};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use palf_core::dataset::DatasetLayout;
use palf_core::evaluation::MetricsReport;
use palf_core::io::{load_session, BoxStatus};
use palf_core::preannotate::fit_box;
use palf_core::synth::{generate_frame, write_frame, SceneConfig};
use palf_core::{AnnotationSession, Box3D, PreannotateConfig, SessionBox};
use palf_service::{router, AppState, BoxSource, FrameBundle, RefitResponse, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    layout: DatasetLayout,
    app: Router,
}

/// Frames 000001 (noisy detections), 000002 (clean detections) and 000003
/// (no detections file).
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let layout = DatasetLayout::new(dir.path());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    write_frame(&layout, &generate_frame("000001", &SceneConfig::default(), &mut rng)).unwrap();
    write_frame(&layout, &generate_frame("000002", &SceneConfig::clean(), &mut rng)).unwrap();
    write_frame(&layout, &generate_frame("000003", &SceneConfig::clean(), &mut rng)).unwrap();
    std::fs::remove_file(layout.detections("000003")).unwrap();
    let app = app_for(dir.path());
    Fixture { _dir: dir, layout, app }
}

fn app_for(root: &Path) -> Router {
    let cfg = ServiceConfig {
        dataset_root: root.to_path_buf(),
        ..Default::default()
    };
    router(AppState::new(cfg))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Bytes) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

async fn bundle(app: &Router, id: &str) -> FrameBundle {
    let (status, body) = call(app, Method::GET, &format!("/api/frames/{id}"), None).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn boxes_payload(boxes: &[SessionBox]) -> Value {
    json!({ "boxes": boxes })
}

#[tokio::test]
async fn lists_frames() {
    let f = fixture();
    let (status, body) = call(&f.app, Method::GET, "/api/frames", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<String> = serde_json::from_slice(&body).unwrap();
    assert_eq!(ids, ["000001", "000002", "000003"]);
}

#[tokio::test]
async fn unknown_frames_are_not_found() {
    let f = fixture();
    for uri in [
        "/api/frames/999999",
        "/api/frames/..",
        "/api/frames/999999/points",
        "/api/frames/999999/metrics",
    ] {
        let (status, body) = call(&f.app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(v["error"], "not_found");
    }
    let (status, _) = call(
        &f.app,
        Method::POST,
        "/api/frames/999999/refit",
        Some(json!({"box": {"position": [0, 0, 0], "scale": [1, 1, 1], "yaw": 0}})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cached_bundle_is_byte_identical() {
    let f = fixture();
    let (_, first) = call(&f.app, Method::GET, "/api/frames/000001", None).await;
    let (_, second) = call(&f.app, Method::GET, "/api/frames/000001", None).await;
    assert_eq!(first, second);
    // a fresh service computes the same bytes
    let (_, fresh) = call(&app_for(&f.layout.root), Method::GET, "/api/frames/000001", None).await;
    assert_eq!(first, fresh);

    let b: FrameBundle = serde_json::from_slice(&first).unwrap();
    assert_eq!(b.source, BoxSource::Preannotation);
    assert!(!b.boxes.is_empty());
    assert!(b.boxes.iter().all(|x| x.status == BoxStatus::PreAnnotated));
    assert_eq!(
        b.fusion.confirmed.len() + b.fusion.wrong.len() + b.fusion.out_of_view.len(),
        b.boxes.len()
    );
    assert!(b.fusion.highlighted_missed_points.iter().all(|&i| i < b.point_count));
    assert!(b.fusion.highlighted_wrong_points.iter().all(|&i| i < b.point_count));
}

#[tokio::test]
async fn missing_detections_degrade_to_empty_boxes_with_warning() {
    let f = fixture();
    let b = bundle(&f.app, "000003").await;
    assert!(b.boxes.is_empty());
    assert!(b.warnings.iter().any(|w| w.contains("no detections file")));
    assert!(b.point_count > 0);
}

#[tokio::test]
async fn points_are_little_endian_f32_triples() {
    let f = fixture();
    let b = bundle(&f.app, "000002").await;
    let resp = f
        .app
        .clone()
        .oneshot(Request::get("/api/frames/000002/points").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/octet-stream");
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(body.len(), b.point_count * 12);
    let cloud = f.layout.load_cloud::<f32>("000002").unwrap().value;
    let x0 = f32::from_le_bytes(body[0..4].try_into().unwrap());
    let z1 = f32::from_le_bytes(body[20..24].try_into().unwrap());
    assert_eq!(x0, cloud.points[0][0]);
    assert_eq!(z1, cloud.points[1][2]);
}

#[tokio::test]
async fn image_is_passed_through() {
    let f = fixture();
    let (status, _) = call(&f.app, Method::GET, "/api/frames/000002/image", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    std::fs::create_dir_all(f.layout.root.join("image_2")).unwrap();
    let payload = b"\x89PNG\r\n\x1a\nnot really an image".to_vec();
    std::fs::write(f.layout.root.join("image_2/000002.png"), &payload).unwrap();
    let resp = f
        .app
        .clone()
        .oneshot(Request::get("/api/frames/000002/image").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    assert_eq!(resp.into_body().collect().await.unwrap().to_bytes(), payload);
    assert_eq!(bundle(&f.app, "000002").await.image_ref.as_deref(), Some("/api/frames/000002/image"));
}

#[tokio::test]
async fn annotations_round_trip_and_are_read_back() {
    let f = fixture();
    let mut boxes = bundle(&f.app, "000001").await.boxes;
    boxes[0].status = BoxStatus::Confirmed;
    boxes[0].bbox.scale[0] += 0.5;
    boxes.push(SessionBox {
        id: "new-1".into(),
        class_label: "Cyclist".into(),
        status: BoxStatus::Created,
        bbox: Box3D::new([12.0, -3.0, -1.0], [1.8, 0.6, 1.7], 1.2).unwrap(),
    });
    let (status, body) = call(&f.app, Method::PUT, "/api/frames/000001/annotations", Some(boxes_payload(&boxes))).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let stored = AnnotationSession::from_json_bytes(&body).unwrap();
    assert_eq!(stored.boxes, boxes);

    let b = bundle(&f.app, "000001").await;
    assert_eq!(b.source, BoxSource::Session);
    assert_eq!(b.boxes, boxes);
    assert_eq!(load_session::<f64>(f.layout.session("000001")).unwrap().boxes, boxes);
}

#[tokio::test]
async fn invalid_box_is_rejected_with_field_diagnostics() {
    let f = fixture();
    let payload = json!({"boxes": [
        {"id": "ok", "class": "Car", "position": [10, 0, -1], "scale": [4, 1.8, 1.5], "yaw": 0},
        {"id": "bad", "class": "Car", "position": [10, 0, -1], "scale": [4, -1.8, 1.5], "yaw": 0}
    ]});
    let (status, body) = call(&f.app, Method::PUT, "/api/frames/000001/annotations", Some(payload)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"], "validation");
    assert_eq!(v["diagnostics"][0]["index"], 1);
    assert_eq!(v["diagnostics"][0]["id"], "bad");
    assert_eq!(v["diagnostics"][0]["field"], "scale.width");
    assert!(!f.layout.session("000001").exists());

    let (status, _) = call(&f.app, Method::PUT, "/api/frames/000001/annotations", Some(json!([1, 2]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_puts_leave_one_complete_payload() {
    let f = fixture();
    let base = bundle(&f.app, "000001").await.boxes;
    for round in 0..10 {
        let mut a = base.clone();
        a.truncate(1);
        a[0].id = format!("a{round}");
        let mut b = base.clone();
        for x in &mut b {
            x.status = BoxStatus::Confirmed;
            x.id = format!("{}-b{round}", x.id);
        }
        let (app1, app2) = (f.app.clone(), f.app.clone());
        let (pa, pb) = (boxes_payload(&a), boxes_payload(&b));
        let t1 = tokio::spawn(async move { call(&app1, Method::PUT, "/api/frames/000001/annotations", Some(pa)).await });
        let t2 = tokio::spawn(async move { call(&app2, Method::PUT, "/api/frames/000001/annotations", Some(pb)).await });
        assert_eq!(t1.await.unwrap().0, StatusCode::OK);
        assert_eq!(t2.await.unwrap().0, StatusCode::OK);

        let on_disk = load_session::<f64>(f.layout.session("000001")).unwrap().boxes;
        assert!(on_disk == a || on_disk == b, "torn session after round {round}");
        assert_eq!(bundle(&f.app, "000001").await.boxes, on_disk);
    }
}

#[tokio::test]
async fn fusion_is_recomputed_after_annotation_change() {
    let f = fixture();
    let before = bundle(&f.app, "000002").await;
    assert!(!before.fusion.confirmed.is_empty());
    let confirmed_box = before.fusion.confirmed[0].box3d_id;

    // move one confirmed box behind the sensor
    let mut boxes = before.boxes.clone();
    boxes[confirmed_box].bbox.position[0] = -25.0;
    let (status, _) = call(&f.app, Method::PUT, "/api/frames/000002/annotations", Some(boxes_payload(&boxes))).await;
    assert_eq!(status, StatusCode::OK);

    let after = bundle(&f.app, "000002").await;
    let mut expected_out = before.fusion.out_of_view.clone();
    expected_out.push(confirmed_box);
    expected_out.sort();
    assert_eq!(after.fusion.out_of_view, expected_out);
    assert_eq!(after.fusion.confirmed.len(), before.fusion.confirmed.len() - 1);
    assert_eq!(after.fusion.missed.len(), before.fusion.missed.len() + 1);
}

#[tokio::test]
async fn refit_tightens_or_flags_degenerate() {
    let f = fixture();
    let gt: Vec<Box3D> = palf_core::io::load_box_list::<f64>(f.layout.ground_truth("expert", "000002"))
        .unwrap()
        .value
        .into_iter()
        .map(|d| d.bbox)
        .collect();
    let mut seed = gt[0];
    seed.position[0] += 0.2;
    seed.yaw += 0.1;
    seed.scale[0] += 0.4;
    let (status, body) = call(&f.app, Method::POST, "/api/frames/000002/refit", Some(json!({ "box": seed }))).await;
    assert_eq!(status, StatusCode::OK);
    let resp: RefitResponse = serde_json::from_slice(&body).unwrap();
    let cloud = f.layout.load_cloud::<f64>("000002").unwrap().value;
    let expected = fit_box(&cloud, &seed, &PreannotateConfig::default()).unwrap();
    assert!(!resp.degenerate);
    assert_eq!(resp.bbox, expected);
    assert!(resp.bbox.length() < seed.length());

    let far = Box3D::new([0.0, 60.0, 5.0], [2.0, 2.0, 2.0], 0.0).unwrap();
    let (_, body) = call(&f.app, Method::POST, "/api/frames/000002/refit", Some(json!({ "box": far }))).await;
    let resp: RefitResponse = serde_json::from_slice(&body).unwrap();
    assert!(resp.degenerate);
    assert_eq!(resp.bbox, far);

    let (status, _) = call(
        &f.app,
        Method::POST,
        "/api/frames/000002/refit",
        Some(json!({"box": {"position": [0, 0, 0], "scale": [0, 1, 1], "yaw": 0}})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn timing_events_validate_kind_and_order() {
    let f = fixture();
    let uri = "/api/frames/000001/events";
    let (status, body) = call(&f.app, Method::POST, uri, Some(json!({"kind": "box_confirmed", "box_id": "b0", "timestamp": 100.0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["event_count"], 1);
    let session = load_session::<f64>(f.layout.session("000001")).unwrap();
    assert_eq!(session.timing_events.len(), 1);
    // seeding the session from pre-annotations keeps the displayed boxes
    assert_eq!(session.boxes, bundle(&f.app, "000001").await.boxes);

    let (status, body) = call(&f.app, Method::POST, uri, Some(json!({"kind": "foo", "box_id": "b0", "timestamp": 101.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["diagnostics"][0]["field"], "kind");

    let (status, _) = call(&f.app, Method::POST, uri, Some(json!({"kind": "box_edited", "box_id": "b1", "timestamp": 99.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(load_session::<f64>(f.layout.session("000001")).unwrap().timing_events.len(), 1);
}

#[tokio::test]
async fn metrics_against_named_ground_truth() {
    let f = fixture();
    let gt = palf_core::io::load_box_list::<f64>(f.layout.ground_truth("expert", "000001")).unwrap().value;
    let boxes: Vec<SessionBox> = gt
        .iter()
        .enumerate()
        .map(|(i, d)| SessionBox {
            id: format!("g{i}"),
            class_label: d.class_label.clone(),
            status: BoxStatus::Edited,
            bbox: d.bbox,
        })
        .collect();
    call(&f.app, Method::PUT, "/api/frames/000001/annotations", Some(boxes_payload(&boxes))).await;
    for (kind, t) in [("box_opened", 10.0), ("box_confirmed", 40.0)] {
        call(&f.app, Method::POST, "/api/frames/000001/events", Some(json!({"kind": kind, "box_id": "g0", "timestamp": t}))).await;
    }

    let (status, body) = call(&f.app, Method::GET, "/api/frames/000001/metrics?gt=expert", None).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let m: MetricsReport = serde_json::from_slice(&body).unwrap();
    assert_eq!((m.precision, m.recall, m.miss_rate), (1.0, 1.0, 0.0));
    assert_eq!(m.num_objects, gt.len());
    assert_eq!(m.total_time_s, Some(30.0));

    let (status, _) = call(&f.app, Method::GET, "/api/frames/000001/metrics?gt=nobody", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&f.app, Method::GET, "/api/frames/000001/metrics?min_iou=3", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
