//! Blocking frame computations behind the HTTP handlers.

use palf_core::dataset::DatasetLayout;
use palf_core::evaluation::{evaluate_frames, match_to_ground_truth, FrameInput, MetricsReport};
use palf_core::fusion::fuse_frame;
use palf_core::io::{load_box_list, load_detections, load_kitti_labels, load_session, BoxStatus, Loaded};
use palf_core::preannotate::{fit_box, preannotate_frame};
use palf_core::{AnnotationSession, Box3D, Calibration, DetectionFile, FusionReport, LabeledBox, PointCloud, SessionBox};
use serde::{Deserialize, Serialize};

use crate::{ServiceConfig, ServiceError};

/// Where the boxes of a bundle came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSource {
    Session,
    Preannotation,
}

/// Everything the review UI needs to draw one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub frame_id: String,
    pub point_count: usize,
    pub boxes: Vec<SessionBox>,
    pub source: BoxSource,
    pub fusion: FusionReport,
    pub image_ref: Option<String>,
    pub warnings: Vec<String>,
}

pub(crate) struct FrameData {
    pub cloud: PointCloud,
    pub calib: Calibration,
    pub detections: DetectionFile,
    pub session: Option<AnnotationSession>,
    pub warnings: Vec<String>,
}

pub(crate) fn load_frame(layout: &DatasetLayout, id: &str) -> Result<FrameData, ServiceError> {
    let mut warnings = Vec::new();
    let Loaded { value: cloud, warnings: w } = layout.load_cloud(id)?;
    warnings.extend(w.into_iter().map(|w| format!("point cloud: {w}")));
    let calib = layout.load_calibration(id)?;
    let det_path = layout.detections(id);
    let detections = if det_path.is_file() {
        let Loaded { value, warnings: w } = load_detections(&det_path)?;
        warnings.extend(w.into_iter().map(|w| format!("detections: {w}")));
        value
    } else {
        warnings.push(format!("no detections file for frame `{id}`; starting without pre-annotations"));
        DetectionFile::default()
    };
    let session_path = layout.session(id);
    let session = if session_path.is_file() {
        Some(load_session(&session_path)?)
    } else {
        None
    };
    Ok(FrameData {
        cloud,
        calib,
        detections,
        session,
        warnings,
    })
}

/// Stored session boxes when a session exists, else fresh pre-annotations.
pub(crate) fn current_boxes(cfg: &ServiceConfig, data: &FrameData) -> (Vec<SessionBox>, BoxSource) {
    if let Some(s) = &data.session {
        return (s.boxes.clone(), BoxSource::Session);
    }
    let boxes = preannotate_frame(&data.cloud, &data.detections.boxes3d, &cfg.preannotate)
        .iter()
        .enumerate()
        .map(|(i, p)| SessionBox {
            id: format!("b{i}"),
            class_label: p.class_label.clone(),
            status: BoxStatus::PreAnnotated,
            bbox: p.bbox,
        })
        .collect();
    (boxes, BoxSource::Preannotation)
}

pub(crate) fn build_bundle(layout: &DatasetLayout, cfg: &ServiceConfig, id: &str) -> Result<FrameBundle, ServiceError> {
    let data = load_frame(layout, id)?;
    let (boxes, source) = current_boxes(cfg, &data);
    let labeled: Vec<LabeledBox> = boxes.iter().map(LabeledBox::from).collect();
    let mut fusion = fuse_frame(&data.cloud, &data.calib, &labeled, &data.detections.boxes2d, &cfg.fusion);
    fusion.frame_id = id.to_string();
    let image_ref = layout.image(id).map(|_| format!("/api/frames/{id}/image"));
    Ok(FrameBundle {
        frame_id: id.to_string(),
        point_count: data.cloud.len(),
        boxes,
        source,
        fusion,
        image_ref,
        warnings: data.warnings,
    })
}

/// Session to extend with events or replace boxes in: the stored one, or
/// one seeded with the boxes the UI is currently showing.
pub(crate) fn session_for_update(layout: &DatasetLayout, cfg: &ServiceConfig, id: &str) -> Result<AnnotationSession, ServiceError> {
    let data = load_frame(layout, id)?;
    if let Some(s) = data.session {
        return Ok(s);
    }
    let (boxes, _) = current_boxes(cfg, &data);
    let mut s = AnnotationSession::new(id);
    s.boxes = boxes;
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefitResponse {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

pub(crate) fn refit(layout: &DatasetLayout, cfg: &ServiceConfig, id: &str, seed: &Box3D) -> Result<RefitResponse, ServiceError> {
    let cloud: PointCloud = layout.load_cloud(id)?.value;
    Ok(match fit_box(&cloud, seed, &cfg.preannotate) {
        Ok(bbox) => RefitResponse {
            bbox,
            degenerate: false,
            message: None,
        },
        Err(e) => RefitResponse {
            bbox: *seed,
            degenerate: true,
            message: Some(e.to_string()),
        },
    })
}

pub(crate) fn metrics(
    layout: &DatasetLayout,
    cfg: &ServiceConfig,
    id: &str,
    gt_name: &str,
    min_iou3d: f64,
) -> Result<MetricsReport, ServiceError> {
    let data = load_frame(layout, id)?;
    let gt: Vec<Box3D> = if gt_name == "kitti" {
        let path = layout.kitti_label(id);
        if !path.is_file() {
            return Err(ServiceError::NotFound(format!("no KITTI labels for frame `{id}`")));
        }
        load_kitti_labels(&path, &data.calib)?.into_iter().map(|d| d.bbox).collect()
    } else {
        let path = layout.ground_truth(gt_name, id);
        if !path.is_file() {
            return Err(ServiceError::NotFound(format!("no ground truth `{gt_name}` for frame `{id}`")));
        }
        load_box_list(&path)?.value.into_iter().map(|d| d.bbox).collect()
    };
    let (boxes, _) = current_boxes(cfg, &data);
    let pred: Vec<Box3D> = boxes.iter().map(|b| b.bbox).collect();
    Ok(evaluate_frames(&[FrameInput {
        frame_id: id.to_string(),
        matched: match_to_ground_truth(&pred, &gt, min_iou3d),
        total_time_s: data.session.as_ref().and_then(|s| s.timing_span()),
    }]))
}
