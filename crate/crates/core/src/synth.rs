//! Synthetic KITTI-like scenes with known ground truth and injected detector
//! noise, plus a simulated reviewer that acts only on what fusion flags.
//! Used for fixtures, tests and the benchmark in the acceptance suite.

use rand::Rng;

use crate::dataset::{ensure_dir, DatasetLayout};
use crate::error::Result;
use crate::fusion::FusionReport;
use crate::geometry::{iou2d, iou3d, project_box3d_to_rect, Box3, Rect};
use crate::io::{save_detections, save_point_cloud, write_atomic, Calibration, Detection2D, Detection3D, DetectionFile, PointCloud};
use crate::scalar::Real;

/// Height of the road surface in the LiDAR frame.
pub const GROUND_Z: f64 = -1.73;

/// Uniform samples over the six faces of `b`, weighted by face area.
pub fn sample_cuboid_surface<T: Real, R: Rng + ?Sized>(b: &Box3<T>, n: usize, rng: &mut R) -> Vec<[T; 3]> {
    let [l, w, h] = b.scale.map(|v| v.to_f64_lossy());
    let areas = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = areas.iter().sum();
    let (s, c) = b.yaw.to_f64_lossy().sin_cos();
    let p = b.position.map(|v| v.to_f64_lossy());
    (0..n)
        .map(|_| {
            let mut pick = rng.gen::<f64>() * total;
            let mut face = 5;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = k;
                    break;
                }
                pick -= a;
            }
            let u = rng.gen::<f64>() - 0.5;
            let v = rng.gen::<f64>() - 0.5;
            let local = match face {
                0 => [l / 2.0, u * w, v * h],
                1 => [-l / 2.0, u * w, v * h],
                2 => [u * l, w / 2.0, v * h],
                3 => [u * l, -w / 2.0, v * h],
                4 => [u * l, v * w, h / 2.0],
                _ => [u * l, v * w, -h / 2.0],
            };
            [
                T::lit(p[0] + c * local[0] - s * local[1]),
                T::lit(p[1] + s * local[0] + c * local[1]),
                T::lit(p[2] + local[2]),
            ]
        })
        .collect()
}

/// KITTI-like pinhole camera (P2 intrinsics of the public benchmark, LiDAR and
/// camera co-located).
pub fn kitti_like_calibration() -> Calibration<f64> {
    Calibration::pinhole(721.5377, 609.5593, 172.854, (1242, 375))
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    /// Objects in front of the car, inclusive range.
    pub objects: (usize, usize),
    /// Objects behind the sensor (outside the camera view), inclusive range.
    pub rear_objects: (usize, usize),
    pub points_per_object: (usize, usize),
    pub ground_points: usize,
    /// Probability that the 3D detector misses an object entirely.
    pub drop_prob: f64,
    /// Probability that a 3D detection is displaced by 2.5–3.5 m.
    pub bad_jitter_prob: f64,
    /// False 3D detections per frame, inclusive range.
    pub spurious_3d: (usize, usize),
    /// Per-coordinate uniform noise on 2D detections, pixels.
    pub pixel_jitter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            objects: (4, 7),
            rear_objects: (0, 2),
            points_per_object: (250, 900),
            ground_points: 3000,
            drop_prob: 0.25,
            bad_jitter_prob: 0.2,
            spurious_3d: (0, 1),
            pixel_jitter: 3.0,
        }
    }
}

impl SceneConfig {
    /// Perfect detectors: every object detected exactly in 3D and 2D.
    pub fn clean() -> Self {
        SceneConfig {
            drop_prob: 0.0,
            bad_jitter_prob: 0.0,
            spurious_3d: (0, 0),
            pixel_jitter: 0.0,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticFrame {
    pub frame_id: String,
    pub cloud: PointCloud<f64>,
    pub calib: Calibration<f64>,
    pub gt: Vec<Box3<f64>>,
    pub detections: DetectionFile<f64>,
}

fn range_usize<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi)
}

fn random_car<R: Rng + ?Sized>(rng: &mut R, x: (f64, f64), lateral: f64) -> Box3<f64> {
    let cx = rng.gen_range(x.0..x.1);
    let half_fov = 0.45 * cx.abs();
    let cy = rng.gen_range(-half_fov.min(lateral)..half_fov.min(lateral));
    let l = rng.gen_range(3.5..4.8);
    let w = rng.gen_range(1.6..2.0);
    let h = rng.gen_range(1.4..1.7);
    let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    Box3::new([cx, cy, GROUND_Z + h / 2.0], [l, w, h], yaw).expect("valid car")
}

fn well_separated(b: &Box3<f64>, others: &[Box3<f64>]) -> bool {
    others.iter().all(|o| {
        let d = (b.position[0] - o.position[0]).hypot(b.position[1] - o.position[1]);
        d > 6.0
    })
}

fn place_cars<R: Rng + ?Sized>(rng: &mut R, n: usize, x: (f64, f64), placed: &mut Vec<Box3<f64>>) {
    let mut added = 0;
    for _ in 0..500 {
        if added == n {
            break;
        }
        let b = random_car(rng, x, 12.0);
        if well_separated(&b, placed) {
            placed.push(b);
            added += 1;
        }
    }
}

fn jitter_detection<R: Rng + ?Sized>(rng: &mut R, gt: &Box3<f64>, bad: bool) -> Box3<f64> {
    let mut b = *gt;
    if bad {
        let dist = rng.gen_range(2.5..3.5);
        let dir = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        b.position[0] += dist * dir.cos();
        b.position[1] += dist * dir.sin();
    } else {
        b.position[0] += rng.gen_range(-0.25..0.25);
        b.position[1] += rng.gen_range(-0.25..0.25);
    }
    b.position[2] += rng.gen_range(-0.1..0.1);
    for k in 0..3 {
        b.scale[k] += rng.gen_range(0.1..0.4);
    }
    Box3::new(b.position, b.scale, b.yaw + rng.gen_range(-0.08..0.08)).expect("valid jitter")
}

pub fn generate_frame<R: Rng + ?Sized>(frame_id: &str, cfg: &SceneConfig, rng: &mut R) -> SyntheticFrame {
    let calib = kitti_like_calibration();
    let mut gt = Vec::new();
    let front = range_usize(rng, cfg.objects);
    place_cars(rng, front, (8.0, 38.0), &mut gt);
    let rear = range_usize(rng, cfg.rear_objects);
    place_cars(rng, rear, (-30.0, -8.0), &mut gt);

    let mut points = Vec::new();
    for b in &gt {
        let n = range_usize(rng, cfg.points_per_object);
        points.extend(sample_cuboid_surface(b, n, rng));
    }
    let mut ground = 0;
    while ground < cfg.ground_points {
        let p = [
            rng.gen_range(-35.0..45.0),
            rng.gen_range(-20.0..20.0),
            GROUND_Z + rng.gen_range(-0.02..0.02),
        ];
        let under_car = gt.iter().any(|b| {
            let l = b.to_local([p[0], p[1], b.position[2]]);
            l[0].abs() <= b.scale[0] / 2.0 + 0.5 && l[1].abs() <= b.scale[1] / 2.0 + 0.5
        });
        if !under_car {
            points.push(p);
            ground += 1;
        }
    }

    let mut boxes3d = Vec::new();
    for b in &gt {
        if rng.gen::<f64>() < cfg.drop_prob {
            continue;
        }
        let bad = rng.gen::<f64>() < cfg.bad_jitter_prob;
        let bbox = if cfg.drop_prob == 0.0 && cfg.bad_jitter_prob == 0.0 && cfg.pixel_jitter == 0.0 {
            *b
        } else {
            jitter_detection(rng, b, bad)
        };
        boxes3d.push(Detection3D {
            bbox,
            class_label: "Car".into(),
            score: rng.gen_range(0.5..0.99),
        });
    }
    let spurious = range_usize(rng, cfg.spurious_3d);
    let mut decoys = gt.clone();
    let mut fake = Vec::new();
    place_cars(rng, spurious, (8.0, 38.0), &mut fake);
    for b in fake {
        if well_separated(&b, &decoys) {
            decoys.push(b);
            boxes3d.push(Detection3D {
                bbox: b,
                class_label: "Car".into(),
                score: rng.gen_range(0.5..0.9),
            });
        }
    }

    let mut boxes2d = Vec::new();
    for b in &gt {
        let Some(r) = project_box3d_to_rect(&calib, b) else {
            continue;
        };
        let j = cfg.pixel_jitter;
        let mut jit = || if j > 0.0 { rng.gen_range(-j..j) } else { 0.0 };
        let (a, bb, c, d) = (r.xmin + jit(), r.ymin + jit(), r.xmax + jit(), r.ymax + jit());
        if let Ok(rect) = Rect::new(a.max(0.0), bb.max(0.0), c.min(calib.width()), d.min(calib.height())) {
            boxes2d.push(Detection2D {
                rect,
                class_label: "Car".into(),
                score: rng.gen_range(0.6..0.99),
            });
        }
    }

    SyntheticFrame {
        frame_id: frame_id.to_owned(),
        cloud: PointCloud::new(points),
        calib,
        gt,
        detections: DetectionFile {
            frame_id: Some(frame_id.to_owned()),
            boxes3d,
            boxes2d,
        },
    }
}

/// Writes the frame in the [`DatasetLayout`] form; the reference boxes go to
/// `ground_truth/expert`.
pub fn write_frame(layout: &DatasetLayout, frame: &SyntheticFrame) -> Result<()> {
    let id = &frame.frame_id;
    for dir in ["velodyne", "calib", "detections", "ground_truth/expert"] {
        ensure_dir(&layout.root.join(dir))?;
    }
    save_point_cloud(layout.velodyne(id), &frame.cloud)?;
    write_atomic(&layout.calib(id), frame.calib.to_kitti_text().as_bytes())?;
    save_detections(layout.detections(id), &frame.detections)?;
    let gt = DetectionFile {
        frame_id: Some(id.clone()),
        boxes3d: frame
            .gt
            .iter()
            .map(|b| Detection3D {
                bbox: *b,
                class_label: "Car".into(),
                score: 1.0,
            })
            .collect(),
        boxes2d: Vec::new(),
    };
    save_detections(layout.ground_truth("expert", id), &gt)
}

/// Reviewer with access to the reference who only inspects flagged items:
/// confirmed and out-of-view boxes are accepted untouched, wrong boxes are
/// corrected to the overlapping reference box (or deleted when none
/// overlaps), and each missed region is annotated with the reference object
/// whose projection best covers it.
pub fn simulate_review(
    boxes: &[Box3<f64>],
    report: &FusionReport<f64>,
    gt: &[Box3<f64>],
    calib: &Calibration<f64>,
) -> Vec<Box3<f64>> {
    let mut out: Vec<Box3<f64>> = Vec::new();
    let wrong: Vec<usize> = report.wrong_ids();
    for (i, b) in boxes.iter().enumerate() {
        if !wrong.contains(&i) {
            out.push(*b);
        }
    }
    for &i in &wrong {
        let best = gt
            .iter()
            .map(|g| (iou3d(&boxes[i], g), g))
            .filter(|(iou, g)| *iou > 0.0 && !out.iter().any(|o| iou3d(o, g) > 0.1))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, g)) = best {
            out.push(*g);
        }
    }
    for region in &report.missed_image_regions {
        let best = gt
            .iter()
            .filter_map(|g| project_box3d_to_rect(calib, g).map(|r| (iou2d(&r, region), g)))
            .filter(|(iou, g)| *iou >= 0.3 && !out.iter().any(|o| iou3d(o, g) > 0.1))
            .max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, g)) = best {
            out.push(*g);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surface_samples_lie_on_faces() {
        let b = Box3::<f64>::new([3.0, -2.0, 0.5], [4.0, 2.0, 1.5], 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in sample_cuboid_surface(&b, 500, &mut rng) {
            let l = b.to_local(p);
            let on_face = (0..3).any(|k| (l[k].abs() - b.scale[k] / 2.0).abs() < 1e-9);
            let inside = (0..3).all(|k| l[k].abs() <= b.scale[k] / 2.0 + 1e-9);
            assert!(on_face && inside, "{l:?}");
        }
    }

    #[test]
    fn generated_frame_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = generate_frame("000000", &SceneConfig::default(), &mut rng);
        assert!(f.gt.len() >= 4);
        assert!(f.cloud.validate().is_ok());
        assert!(!f.detections.boxes2d.is_empty());
        let again = generate_frame("000000", &SceneConfig::default(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(again.cloud, f.cloud);
    }
}
