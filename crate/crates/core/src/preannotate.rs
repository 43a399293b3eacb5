//! Pre-annotation: refine detector boxes by fitting them to the enclosed
//! points whenever enough points are available.
//!
//! Fitting works on a crop of the seed box (grown sideways and upwards by
//! `crop_margin_m`). The lowest points form a ground band that only fixes the
//! bottom face; the remaining points drive a minimum-area-rectangle search
//! over a yaw window around the seed heading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{count_points_in_box, Box3};
use crate::io::{Detection3D, PointCloud};
use crate::scalar::Real;

const MIN_FIT_POINTS: usize = 4;
const MIN_EXTENT_M: f64 = 0.05;
const FLOOR_PERCENTILE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct PreannotateConfig<T> {
    /// Fitting runs only when the crop holds strictly more points than this.
    pub point_threshold: usize,
    pub crop_margin_m: T,
    pub yaw_search_halfwidth_rad: T,
    pub yaw_step_rad: T,
    pub ground_band_m: T,
    /// Detections scoring below this are discarded.
    pub min_score: T,
}

impl<T: Real> Default for PreannotateConfig<T> {
    fn default() -> Self {
        PreannotateConfig {
            point_threshold: 20,
            crop_margin_m: T::lit(0.3),
            yaw_search_halfwidth_rad: T::FRAC_PI_4(),
            yaw_step_rad: T::PI() / T::lit(180.0),
            ground_band_m: T::lit(0.2),
            min_score: T::lit(0.3),
        }
    }
}

impl<T: Real> PreannotateConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("crop_margin_m", self.crop_margin_m),
            ("yaw_search_halfwidth_rad", self.yaw_search_halfwidth_rad),
            ("yaw_step_rad", self.yaw_step_rad),
            ("ground_band_m", self.ground_band_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::validation(name, format!("must be > 0, got {v}")));
            }
        }
        if self.yaw_step_rad > self.yaw_search_halfwidth_rad {
            return Err(Error::validation(
                "yaw_step_rad",
                "must not exceed yaw_search_halfwidth_rad",
            ));
        }
        if !self.min_score.is_finite() {
            return Err(Error::validation("min_score", "non-finite"));
        }
        Ok(())
    }

    /// Number of yaw steps on each side of the seed heading.
    fn half_steps(&self) -> i64 {
        let ratio = (self.yaw_search_halfwidth_rad / self.yaw_step_rad).to_f64_lossy();
        (ratio + 1e-9).floor() as i64
    }
}

/// What happened to a detection during pre-annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted,
    /// Crop held too few points; the detector box passes through.
    BelowThreshold,
    /// Fitting was attempted but degenerate; the detector box passes through.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreannotatedBox<T> {
    pub bbox: Box3<T>,
    pub class_label: String,
    pub score: T,
    /// Index of the originating detection.
    pub source_index: usize,
    pub crop_points: usize,
    pub outcome: FitOutcome,
}

/// Rectangle found by the yaw search, in the frame rotated by `yaw` about `origin`.
#[derive(Clone, Copy, Debug)]
pub struct YawCandidate<T> {
    pub yaw: T,
    pub area: T,
    pub xmin: T,
    pub xmax: T,
    pub ymin: T,
    pub ymax: T,
}

/// Axis-aligned bounds of `xy` (given relative to some origin) after rotating
/// by `-yaw`.
pub fn rotated_bounds<T: Real>(xy: &[[T; 2]], yaw: T) -> YawCandidate<T> {
    let (s, c) = yaw.sin_cos();
    let inf = T::infinity();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (inf, -inf, inf, -inf);
    for p in xy {
        let x = c * p[0] + s * p[1];
        let y = -s * p[0] + c * p[1];
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    YawCandidate {
        yaw,
        area: (xmax - xmin) * (ymax - ymin),
        xmin,
        xmax,
        ymin,
        ymax,
    }
}

/// Searched yaws in visiting order: the seed heading, then alternating
/// `+k·step`, `−k·step` outwards.
pub fn yaw_candidates<T: Real>(seed_yaw: T, cfg: &PreannotateConfig<T>) -> Vec<T> {
    let k = cfg.half_steps();
    let mut out = Vec::with_capacity(2 * k as usize + 1);
    out.push(seed_yaw);
    for i in 1..=k {
        let off = cfg.yaw_step_rad * T::lit(i as f64);
        out.push(seed_yaw + off);
        out.push(seed_yaw - off);
    }
    out
}

/// Lower value at the given fraction using the nearest-rank rule.
fn nearest_rank<T: Real>(sorted: &[T], fraction: f64) -> T {
    let n = sorted.len();
    let rank = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Fits a tight box to the points around `seed`.
///
/// Returns [`Error::DegenerateFit`] when fewer than four points remain above
/// the ground band or an extent collapses below 5 cm; callers keep the seed.
pub fn fit_box<T: Real>(cloud: &PointCloud<T>, seed: &Box3<T>, cfg: &PreannotateConfig<T>) -> Result<Box3<T>> {
    let crop_box = seed.expanded_for_crop(cfg.crop_margin_m);
    let crop: Vec<[T; 3]> = cloud
        .points
        .iter()
        .copied()
        .filter(|p| crop_box.contains(*p))
        .collect();
    if crop.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} point(s) in crop, need at least {MIN_FIT_POINTS}",
            crop.len()
        )));
    }

    let mut zs: Vec<T> = crop.iter().map(|p| p[2]).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).expect("finite z"));
    let z_floor = nearest_rank(&zs, FLOOR_PERCENTILE);
    let band_top = z_floor + cfg.ground_band_m;

    let origin = [seed.position[0], seed.position[1]];
    let mut xy = Vec::with_capacity(crop.len());
    let mut top = T::neg_infinity();
    for p in crop.iter().filter(|p| p[2] >= band_top) {
        xy.push([p[0] - origin[0], p[1] - origin[1]]);
        top = top.max(p[2]);
    }
    if xy.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} point(s) above the ground band, need at least {MIN_FIT_POINTS}",
            xy.len()
        )));
    }

    let mut best: Option<YawCandidate<T>> = None;
    for yaw in yaw_candidates(seed.yaw, cfg) {
        let cand = rotated_bounds(&xy, yaw);
        // strict: earlier (closer to the seed) candidates win ties
        if best.is_none_or(|b| cand.area < b.area) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least the seed yaw is searched");

    let length = best.xmax - best.xmin;
    let width = best.ymax - best.ymin;
    let height = top - z_floor;
    let min_extent = T::lit(MIN_EXTENT_M);
    if length < min_extent || width < min_extent || height < min_extent {
        return Err(Error::DegenerateFit(format!(
            "extent collapsed to ({length}, {width}, {height})"
        )));
    }

    let half = T::lit(0.5);
    let (cx, cy) = ((best.xmin + best.xmax) * half, (best.ymin + best.ymax) * half);
    let (s, c) = best.yaw.sin_cos();
    let position = [
        origin[0] + c * cx - s * cy,
        origin[1] + s * cx + c * cy,
        (top + z_floor) * half,
    ];
    Box3::new(position, [length, width, height], best.yaw)
}

/// Runs the score filter and the threshold-gated fit over one frame's
/// detections, preserving their order.
pub fn preannotate_frame<T: Real>(
    cloud: &PointCloud<T>,
    detections: &[Detection3D<T>],
    cfg: &PreannotateConfig<T>,
) -> Vec<PreannotatedBox<T>> {
    detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.score >= cfg.min_score)
        .map(|(i, d)| {
            let crop = d.bbox.expanded_for_crop(cfg.crop_margin_m);
            let crop_points = count_points_in_box(cloud, &crop);
            let (bbox, outcome) = if crop_points > cfg.point_threshold {
                match fit_box(cloud, &d.bbox, cfg) {
                    Ok(b) => (b, FitOutcome::Fitted),
                    Err(_) => (d.bbox, FitOutcome::Degenerate),
                }
            } else {
                (d.bbox, FitOutcome::BelowThreshold)
            };
            PreannotatedBox {
                bbox,
                class_label: d.class_label.clone(),
                score: d.score,
                source_index: i,
                crop_points,
                outcome,
            }
        })
        .collect()
}
