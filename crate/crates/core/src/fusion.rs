//! Camera–LiDAR late fusion: match projected 3D boxes to 2D detections and
//! classify each side as confirmed, wrong or missed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assignment::{build_cost_matrix, solve_assignment};
use crate::error::{Error, Result};
use crate::geometry::{iou2d, points_in_boxes, project_box3d_to_rect, project_points, Box3, Rect};
use crate::io::{Calibration, Detection2D, PointCloud, SessionBox};
use crate::preannotate::PreannotatedBox;
use crate::scalar::Real;

pub const FUSION_REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct FusionConfig<T> {
    /// Matched pairs below this 2D IoU are flagged wrong.
    pub iou2d_threshold: T,
    /// Optional gate on the center distance of a matched pair, pixels.
    pub max_center_distance_px: Option<T>,
    /// 2D detections scoring below this are ignored.
    pub min_2d_score: T,
    /// When false, missed detections are still listed but not back-projected
    /// or outlined.
    pub missed_check: bool,
}

impl<T: Real> Default for FusionConfig<T> {
    fn default() -> Self {
        FusionConfig {
            iou2d_threshold: T::lit(0.5),
            max_center_distance_px: None,
            min_2d_score: T::lit(0.5),
            missed_check: true,
        }
    }
}

impl<T: Real> FusionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou2d_threshold >= T::zero() && self.iou2d_threshold <= T::one()) {
            return Err(Error::validation("iou2d_threshold", "must lie in [0, 1]"));
        }
        if let Some(g) = self.max_center_distance_px {
            if !(g.is_finite() && g >= T::zero()) {
                return Err(Error::validation("max_center_distance_px", "must be finite and ≥ 0"));
            }
        }
        if !self.min_2d_score.is_finite() {
            return Err(Error::validation("min_2d_score", "non-finite"));
        }
        Ok(())
    }
}

/// A 3D box entering fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBox<T> {
    pub bbox: Box3<T>,
    pub class_label: String,
}

impl<T: Real> From<&PreannotatedBox<T>> for LabeledBox<T> {
    fn from(b: &PreannotatedBox<T>) -> Self {
        LabeledBox {
            bbox: b.bbox,
            class_label: b.class_label.clone(),
        }
    }
}

impl<T: Real> From<&SessionBox<T>> for LabeledBox<T> {
    fn from(b: &SessionBox<T>) -> Self {
        LabeledBox {
            bbox: b.bbox,
            class_label: b.class_label.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConfirmedEntry<T> {
    pub box3d_id: usize,
    pub box2d_id: usize,
    pub iou2d: T,
    /// Matched pair carries different class labels.
    pub class_mismatch: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongReason {
    LowIou,
    Unmatched3d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WrongEntry<T> {
    pub box3d_id: usize,
    pub reason: WrongReason,
    pub iou2d: Option<T>,
    /// Matched 2D detection for `low_iou` entries.
    pub box2d_id: Option<usize>,
    pub class_mismatch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MissedEntry<T> {
    pub box2d_id: usize,
    pub rect: Rect<T>,
}

/// Outcome of fusing one frame. Ids index the 3D boxes and the 2D detections
/// as passed to [`fuse_frame`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FusionReport<T> {
    pub palf_fusion_report: u32,
    #[serde(default)]
    pub frame_id: String,
    pub confirmed: Vec<ConfirmedEntry<T>>,
    pub wrong: Vec<WrongEntry<T>>,
    pub missed: Vec<MissedEntry<T>>,
    pub out_of_view: Vec<usize>,
    /// Points inside wrong boxes (rendered red).
    pub highlighted_wrong_points: BTreeSet<usize>,
    /// Points projecting into missed regions (rendered orange).
    pub highlighted_missed_points: BTreeSet<usize>,
    pub missed_image_regions: Vec<Rect<T>>,
    /// Image rectangle of every 3D box, `null` when out of view.
    pub projected_rects: Vec<Option<Rect<T>>>,
    /// 2D detections dropped by the score cutoff.
    pub discarded_2d: Vec<usize>,
    /// Every box fell out of view although 2D detections exist and boxes sit
    /// in front of the sensor: calibration or frame pairing is suspect.
    pub calibration_mismatch: bool,
    pub warnings: Vec<String>,
}

impl<T: Real> FusionReport<T> {
    pub fn empty() -> Self {
        FusionReport {
            palf_fusion_report: FUSION_REPORT_VERSION,
            frame_id: String::new(),
            confirmed: Vec::new(),
            wrong: Vec::new(),
            missed: Vec::new(),
            out_of_view: Vec::new(),
            highlighted_wrong_points: BTreeSet::new(),
            highlighted_missed_points: BTreeSet::new(),
            missed_image_regions: Vec::new(),
            projected_rects: Vec::new(),
            discarded_2d: Vec::new(),
            calibration_mismatch: false,
            warnings: Vec::new(),
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let r: Self = serde_json::from_slice(bytes)
            .map_err(|e| Error::format(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if r.palf_fusion_report != FUSION_REPORT_VERSION {
            return Err(Error::format(
                "/palf_fusion_report",
                format!("unsupported version {}", r.palf_fusion_report),
            ));
        }
        Ok(r)
    }

    pub fn wrong_ids(&self) -> Vec<usize> {
        self.wrong.iter().map(|w| w.box3d_id).collect()
    }
}

fn same_class(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

/// Indices of points whose valid projection falls inside any of `rects`
/// (closed boundary).
pub fn backproject_missed<T: Real>(
    cloud: &PointCloud<T>,
    calib: &Calibration<T>,
    rects: &[Rect<T>],
) -> BTreeSet<usize> {
    if rects.is_empty() {
        return BTreeSet::new();
    }
    let (ips, valid) = project_points(calib, &cloud.points);
    ips.iter()
        .zip(valid)
        .enumerate()
        .filter(|(_, (ip, ok))| *ok && rects.iter().any(|r| r.contains(ip.u, ip.v)))
        .map(|(i, _)| i)
        .collect()
}

pub fn fuse_frame<T: Real>(
    cloud: &PointCloud<T>,
    calib: &Calibration<T>,
    boxes3d: &[LabeledBox<T>],
    dets2d: &[Detection2D<T>],
    cfg: &FusionConfig<T>,
) -> FusionReport<T> {
    let mut report = FusionReport::empty();

    // (1) project; out-of-view boxes sit out of the matching
    report.projected_rects = boxes3d
        .iter()
        .map(|b| project_box3d_to_rect(calib, &b.bbox))
        .collect();
    let mut in_view: Vec<(usize, Rect<T>)> = Vec::new();
    for (i, r) in report.projected_rects.iter().enumerate() {
        match r {
            Some(r) => in_view.push((i, *r)),
            None => report.out_of_view.push(i),
        }
    }
    let mut kept: Vec<(usize, &Detection2D<T>)> = Vec::new();
    for (j, d) in dets2d.iter().enumerate() {
        if d.score >= cfg.min_2d_score {
            kept.push((j, d));
        } else {
            report.discarded_2d.push(j);
        }
    }

    // (2) center-distance assignment
    let rects3: Vec<Rect<T>> = in_view.iter().map(|(_, r)| *r).collect();
    let rects2: Vec<Rect<T>> = kept.iter().map(|(_, d)| d.rect).collect();
    let costs = build_cost_matrix(&rects3, &rects2);
    let matching = solve_assignment(&costs, cfg.max_center_distance_px);

    // (3) score matched pairs
    for &(r, c) in &matching.pairs {
        let (box_id, rect3) = in_view[r];
        let (det_id, det) = kept[c];
        let iou = iou2d(&rect3, &det.rect);
        let class_mismatch = !same_class(&boxes3d[box_id].class_label, &det.class_label);
        if iou >= cfg.iou2d_threshold {
            report.confirmed.push(ConfirmedEntry {
                box3d_id: box_id,
                box2d_id: det_id,
                iou2d: iou,
                class_mismatch,
            });
        } else {
            report.wrong.push(WrongEntry {
                box3d_id: box_id,
                reason: WrongReason::LowIou,
                iou2d: Some(iou),
                box2d_id: Some(det_id),
                class_mismatch,
            });
        }
    }
    // (4) 3D boxes with no camera counterpart
    for &r in &matching.unmatched_rows {
        report.wrong.push(WrongEntry {
            box3d_id: in_view[r].0,
            reason: WrongReason::Unmatched3d,
            iou2d: None,
            box2d_id: None,
            class_mismatch: false,
        });
    }
    report.wrong.sort_by_key(|w| w.box3d_id);
    // (5) camera detections with no 3D counterpart
    for &c in &matching.unmatched_cols {
        let (det_id, det) = kept[c];
        report.missed.push(MissedEntry {
            box2d_id: det_id,
            rect: det.rect,
        });
    }

    // (6) red points
    report.highlighted_wrong_points =
        points_in_boxes(cloud, report.wrong.iter().map(|w| &boxes3d[w.box3d_id].bbox));
    // (7) orange points and image regions
    if cfg.missed_check {
        report.missed_image_regions = report.missed.iter().map(|m| m.rect).collect();
        report.highlighted_missed_points = backproject_missed(cloud, calib, &report.missed_image_regions);
    }

    if !boxes3d.is_empty()
        && in_view.is_empty()
        && !kept.is_empty()
        && boxes3d.iter().any(|b| b.bbox.position[0] > T::zero())
    {
        report.calibration_mismatch = true;
        report.warnings.push(
            "calibration mismatch: all 3D boxes project outside the image while 2D detections exist"
                .to_owned(),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DEFAULT_IMAGE_SIZE;

    fn calib() -> Calibration<f64> {
        Calibration::pinhole(700.0, 621.0, 187.5, DEFAULT_IMAGE_SIZE)
    }

    fn car(x: f64, y: f64) -> LabeledBox<f64> {
        LabeledBox {
            bbox: Box3::new([x, y, -0.8], [4.0, 1.8, 1.5], 0.3).unwrap(),
            class_label: "Car".into(),
        }
    }

    fn det(rect: Rect<f64>, class: &str) -> Detection2D<f64> {
        Detection2D {
            rect,
            class_label: class.into(),
            score: 0.9,
        }
    }

    /// Shrinks `r` symmetrically so that iou(shrunk, r) = ratio.
    fn shrink_to_iou(r: Rect<f64>, ratio: f64) -> Rect<f64> {
        let s = ratio.sqrt();
        let [cx, cy] = r.center();
        let (hw, hh) = (r.width() * s / 2.0, r.height() * s / 2.0);
        Rect::new(cx - hw, cy - hh, cx + hw, cy + hh).unwrap()
    }

    #[test]
    fn empty_frame() {
        let r = fuse_frame(&PointCloud::default(), &calib(), &[], &[], &FusionConfig::default());
        assert_eq!(r, FusionReport::empty());
    }

    #[test]
    fn good_overlap_is_confirmed() {
        let c = calib();
        let b = car(20.0, 1.0);
        let rect = project_box3d_to_rect(&c, &b.bbox).unwrap();
        let inner = shrink_to_iou(rect, 0.9);
        // contained rect: iou = area ratio
        assert!((iou2d(&rect, &inner) - 0.9).abs() < 1e-9);
        let r = fuse_frame(&PointCloud::default(), &c, &[b], &[det(inner, "car")], &FusionConfig::default());
        assert_eq!(r.confirmed.len(), 1);
        assert!((r.confirmed[0].iou2d - 0.9).abs() < 1e-9);
        assert!(!r.confirmed[0].class_mismatch);
        assert!(r.wrong.is_empty() && r.missed.is_empty());
    }

    #[test]
    fn low_overlap_is_wrong_with_points_highlighted() {
        let c = calib();
        let b = car(20.0, 1.0);
        let rect = project_box3d_to_rect(&c, &b.bbox).unwrap();
        let cloud = PointCloud::new(vec![b.bbox.position, [50.0, 30.0, 0.0]]);
        let r = fuse_frame(&cloud, &c, &[b], &[det(shrink_to_iou(rect, 0.3), "Pedestrian")], &FusionConfig::default());
        assert_eq!(r.wrong.len(), 1);
        assert_eq!(r.wrong[0].reason, WrongReason::LowIou);
        assert!(r.wrong[0].class_mismatch);
        assert_eq!(r.highlighted_wrong_points.iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn lone_3d_box_is_wrong_unmatched() {
        let r = fuse_frame(&PointCloud::default(), &calib(), &[car(20.0, 0.0)], &[], &FusionConfig::default());
        assert_eq!(r.wrong.len(), 1);
        assert_eq!(r.wrong[0].reason, WrongReason::Unmatched3d);
        assert_eq!(r.wrong[0].iou2d, None);
    }

    #[test]
    fn lone_2d_detection_is_missed_and_back_projected() {
        let c = calib();
        // Points straight ahead at increasing depth project onto the principal point.
        let cloud = PointCloud::new(vec![[10.0, 0.0, 0.0], [30.0, 0.0, 0.0], [10.0, 5.0, 0.0], [-10.0, 0.0, 0.0]]);
        let rect = Rect::new(600.0, 170.0, 640.0, 200.0).unwrap();
        let r = fuse_frame(&cloud, &c, &[], &[det(rect, "Car")], &FusionConfig::default());
        assert_eq!(r.missed.len(), 1);
        assert_eq!(r.missed_image_regions, vec![rect]);
        assert_eq!(r.highlighted_missed_points.iter().copied().collect::<Vec<_>>(), vec![0, 1]);

        let cfg = FusionConfig { missed_check: false, ..Default::default() };
        let r = fuse_frame(&cloud, &c, &[], &[det(rect, "Car")], &cfg);
        assert_eq!(r.missed.len(), 1);
        assert!(r.highlighted_missed_points.is_empty() && r.missed_image_regions.is_empty());
    }

    #[test]
    fn rear_boxes_are_out_of_view_and_low_scores_discarded() {
        let c = calib();
        let mut weak = det(Rect::new(0.0, 0.0, 10.0, 10.0).unwrap(), "Car");
        weak.score = 0.2;
        let r = fuse_frame(&PointCloud::default(), &c, &[car(-15.0, 0.0)], &[weak], &FusionConfig::default());
        assert_eq!(r.out_of_view, vec![0]);
        assert!(r.wrong.is_empty());
        assert_eq!(r.discarded_2d, vec![0]);
        assert!(r.missed.is_empty());
        assert!(!r.calibration_mismatch);
    }

    #[test]
    fn mismatch_flag_when_forward_boxes_vanish() {
        // Camera looking backwards relative to the LiDAR
        let mut c = calib();
        c.lidar_to_cam[2][0] = -1.0;
        let d = det(Rect::new(100.0, 100.0, 200.0, 200.0).unwrap(), "Car");
        let r = fuse_frame(&PointCloud::default(), &c, &[car(20.0, 0.0)], &[d], &FusionConfig::default());
        assert!(r.calibration_mismatch);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn report_json_round_trip() {
        let c = calib();
        let b = car(20.0, 1.0);
        let rect = project_box3d_to_rect(&c, &b.bbox).unwrap();
        let mut r = fuse_frame(&PointCloud::new(vec![b.bbox.position]), &c, &[b, car(-9.0, 0.0)], &[det(rect, "Car"), det(Rect::new(1.0, 1.0, 5.0, 5.0).unwrap(), "Car")], &FusionConfig::default());
        r.frame_id = "000003".into();
        let back = FusionReport::<f64>::from_json_bytes(&r.to_json_bytes()).unwrap();
        assert_eq!(back, r);
        let text = String::from_utf8(r.to_json_bytes()).unwrap();
        for key in ["confirmed", "wrong", "missed", "out_of_view", "highlighted_wrong_points", "highlighted_missed_points", "missed_image_regions"] {
            assert!(text.contains(&format!("\"{key}\"")), "{key}");
        }
    }
}
