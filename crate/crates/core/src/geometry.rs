//! Yaw-oriented 3D boxes, image rectangles, projection through the KITTI
//! calibration chain, and exact 2D/3D intersection-over-union.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Calibration, PointCloud};
use crate::scalar::{normalize_angle, Real};

/// How far below the seed's bottom face a fitting crop reaches.
pub const CROP_FLOOR_SLACK_M: f64 = 1e-3;

/// Cuboid in the LiDAR frame, rotated about +z only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox3<T>", bound = "T: Real")]
pub struct Box3<T> {
    /// Box center, meters.
    pub position: [T; 3],
    /// `(length, width, height)`, meters; length runs along the heading.
    pub scale: [T; 3],
    /// Heading about +z, radians, in `[-π, π)`.
    pub yaw: T,
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
struct RawBox3<T> {
    position: [T; 3],
    scale: [T; 3],
    yaw: T,
}

impl<T: Real> TryFrom<RawBox3<T>> for Box3<T> {
    type Error = Error;

    fn try_from(raw: RawBox3<T>) -> Result<Self> {
        Box3::new(raw.position, raw.scale, raw.yaw)
    }
}

impl<T: Real> Box3<T> {
    /// Validates extents and wraps the yaw.
    pub fn new(position: [T; 3], scale: [T; 3], yaw: T) -> Result<Self> {
        let b = Box3 {
            position,
            scale,
            yaw: normalize_angle(yaw),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        const AXES: [&str; 3] = ["length", "width", "height"];
        for (k, name) in AXES.iter().enumerate() {
            let s = self.scale[k];
            if !(s.is_finite() && s > T::zero()) {
                return Err(Error::validation(
                    format!("scale.{name}"),
                    format!("must be finite and > 0, got {s}"),
                ));
            }
        }
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::validation("position", "non-finite coordinate"));
        }
        if !self.yaw.is_finite() {
            return Err(Error::validation("yaw", "non-finite"));
        }
        Ok(())
    }

    pub fn length(&self) -> T {
        self.scale[0]
    }

    pub fn width(&self) -> T {
        self.scale[1]
    }

    pub fn height(&self) -> T {
        self.scale[2]
    }

    pub fn volume(&self) -> T {
        self.scale[0] * self.scale[1] * self.scale[2]
    }

    pub fn bottom(&self) -> T {
        self.position[2] - self.height() / T::lit(2.0)
    }

    pub fn top(&self) -> T {
        self.position[2] + self.height() / T::lit(2.0)
    }

    /// Grows length and width by `margin` on each side and raises the top by
    /// `margin`; the bottom face stays where it is, give or take
    /// [`CROP_FLOOR_SLACK_M`].
    pub fn expanded_for_crop(&self, margin: T) -> Self {
        let two = T::lit(2.0);
        let mut b = *self;
        b.scale[0] += two * margin;
        b.scale[1] += two * margin;
        // the floor gets a millimetre of slack so points lying on the seed's
        // bottom face survive rounding in `contains`
        b.scale[2] += margin + T::lit(CROP_FLOOR_SLACK_M);
        b.position[2] += (margin - T::lit(CROP_FLOOR_SLACK_M)) / two;
        b
    }

    /// Expresses `p` in the box frame (origin at the center, x along the heading).
    #[inline]
    pub fn to_local(&self, p: [T; 3]) -> [T; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.position[2]]
    }

    /// Closed containment: points on a face count as inside.
    #[inline]
    pub fn contains(&self, p: [T; 3]) -> bool {
        let half = T::lit(0.5);
        let l = self.to_local(p);
        l[0].abs() <= self.scale[0] * half
            && l[1].abs() <= self.scale[1] * half
            && l[2].abs() <= self.scale[2] * half
    }

    /// Bird's-eye footprint, counterclockwise starting from the local `(+l/2, +w/2)` corner.
    pub fn bev_corners(&self) -> [[T; 2]; 4] {
        let half = T::lit(0.5);
        let (hl, hw) = (self.scale[0] * half, self.scale[1] * half);
        let (s, c) = self.yaw.sin_cos();
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| {
            [
                self.position[0] + c * x - s * y,
                self.position[1] + s * x + c * y,
            ]
        })
    }

    /// Eight corners: bottom face counterclockwise from the local `(+x, +y)`
    /// corner, then the top face in the same order.
    pub fn corners(&self) -> [[T; 3]; 8] {
        let bev = self.bev_corners();
        let (lo, hi) = (self.bottom(), self.top());
        let mut out = [[T::zero(); 3]; 8];
        for k in 0..4 {
            out[k] = [bev[k][0], bev[k][1], lo];
            out[k + 4] = [bev[k][0], bev[k][1], hi];
        }
        out
    }
}

/// Axis-aligned image rectangle in pixels, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 4]", into = "[T; 4]", bound = "T: Real")]
pub struct Rect<T> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Real> TryFrom<[T; 4]> for Rect<T> {
    type Error = Error;

    fn try_from(v: [T; 4]) -> Result<Self> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl<T: Real> From<Rect<T>> for [T; 4] {
    fn from(r: Rect<T>) -> Self {
        [r.xmin, r.ymin, r.xmax, r.ymax]
    }
}

impl<T: Real> Rect<T> {
    pub fn new(xmin: T, ymin: T, xmax: T, ymax: T) -> Result<Self> {
        let r = Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        };
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::validation("rect", "non-finite coordinate"));
        }
        if !(xmin < xmax && ymin < ymax) {
            return Err(Error::validation(
                "rect",
                format!("requires xmin < xmax and ymin < ymax, got [{xmin}, {ymin}, {xmax}, {ymax}]"),
            ));
        }
        Ok(r)
    }

    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> [T; 2] {
        let half = T::lit(0.5);
        [(self.xmin + self.xmax) * half, (self.ymin + self.ymax) * half]
    }

    /// Closed containment.
    pub fn contains(&self, u: T, v: T) -> bool {
        u >= self.xmin && u <= self.xmax && v >= self.ymin && v <= self.ymax
    }
}

/// Projected point: pixel coordinates plus depth along the rectified camera axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint<T> {
    pub u: T,
    pub v: T,
    pub depth: T,
}

pub fn box3d_corners<T: Real>(b: &Box3<T>) -> [[T; 3]; 8] {
    b.corners()
}

/// Indices of cloud points inside `b` (closed boundary), ascending.
pub fn points_in_box<T: Real>(cloud: &PointCloud<T>, b: &Box3<T>) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| b.contains(*p).then_some(i))
        .collect()
}

pub fn count_points_in_box<T: Real>(cloud: &PointCloud<T>, b: &Box3<T>) -> usize {
    cloud.points.iter().filter(|p| b.contains(**p)).count()
}

fn project_one<T: Real>(calib: &Calibration<T>, p: [T; 3]) -> ImagePoint<T> {
    let h = calib.rect_to_homogeneous_pixel(calib.lidar_to_rect(p));
    let d = h[2];
    if d == T::zero() {
        return ImagePoint {
            u: T::nan(),
            v: T::nan(),
            depth: d,
        };
    }
    ImagePoint {
        u: h[0] / d,
        v: h[1] / d,
        depth: d,
    }
}

/// Projects LiDAR points to pixels. A point is valid when it lies in front of
/// the camera and lands inside `[0, width) × [0, height)`.
pub fn project_points<T: Real>(
    calib: &Calibration<T>,
    points: &[[T; 3]],
) -> (Vec<ImagePoint<T>>, Vec<bool>) {
    let (w, h) = (calib.width(), calib.height());
    points
        .iter()
        .map(|p| {
            let ip = project_one(calib, *p);
            let valid = ip.depth > T::zero()
                && ip.u >= T::zero()
                && ip.u < w
                && ip.v >= T::zero()
                && ip.v < h;
            (ip, valid)
        })
        .unzip()
}

/// Image-plane rectangle covering the projection of `b`, clipped to the image.
/// `None` when fewer than two corners are in front of the camera or the
/// clipped rectangle has no area.
pub fn project_box3d_to_rect<T: Real>(calib: &Calibration<T>, b: &Box3<T>) -> Option<Rect<T>> {
    let front: Vec<ImagePoint<T>> = b
        .corners()
        .iter()
        .map(|c| project_one(calib, *c))
        .filter(|ip| ip.depth > T::zero())
        .collect();
    if front.len() < 2 {
        return None;
    }
    let inf = T::infinity();
    let (mut umin, mut vmin, mut umax, mut vmax) = (inf, inf, -inf, -inf);
    for ip in &front {
        umin = umin.min(ip.u);
        vmin = vmin.min(ip.v);
        umax = umax.max(ip.u);
        vmax = vmax.max(ip.v);
    }
    let xmin = umin.max(T::zero());
    let ymin = vmin.max(T::zero());
    let xmax = umax.min(calib.width());
    let ymax = vmax.min(calib.height());
    Rect::new(xmin, ymin, xmax, ymax).ok()
}

pub fn iou2d<T: Real>(a: &Rect<T>, b: &Rect<T>) -> T {
    let iw = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let ih = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

fn cross<T: Real>(o: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area; positive for counterclockwise polygons.
pub fn polygon_area<T: Real>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc * T::lit(0.5)
}

/// Sutherland–Hodgman: clips `subject` against the convex counterclockwise
/// polygon `clip`.
pub fn clip_convex_polygon<T: Real>(subject: &[[T; 2]], clip: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross(a, b, cur) >= T::zero();
            let prev_in = cross(a, b, prev) >= T::zero();
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn segment_line_intersection<T: Real>(p: [T; 2], q: [T; 2], a: [T; 2], b: [T; 2]) -> [T; 2] {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == T::zero() {
        return q;
    }
    let t = dp / denom;
    [p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]
}

/// Area of the bird's-eye overlap of two boxes.
pub fn bev_intersection_area<T: Real>(a: &Box3<T>, b: &Box3<T>) -> T {
    let poly = clip_convex_polygon(&a.bev_corners(), &b.bev_corners());
    polygon_area(&poly).max(T::zero())
}

/// Exact IoU of two yaw-only boxes: BEV polygon overlap × vertical overlap.
pub fn iou3d<T: Real>(a: &Box3<T>, b: &Box3<T>) -> T {
    if a == b {
        return T::one();
    }
    let dz = a.top().min(b.top()) - a.bottom().max(b.bottom());
    if dz <= T::zero() {
        return T::zero();
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).max(T::zero()).min(T::one())
}

/// Union of [`points_in_box`] over several boxes.
pub fn points_in_boxes<'a, T: Real>(
    cloud: &PointCloud<T>,
    boxes: impl IntoIterator<Item = &'a Box3<T>>,
) -> BTreeSet<usize> {
    let boxes: Vec<&Box3<T>> = boxes.into_iter().collect();
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| boxes.iter().any(|b| b.contains(**p)))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cube(x: f64, y: f64, z: f64, yaw: f64) -> Box3<f64> {
        Box3::new([x, y, z], [1.0, 1.0, 1.0], yaw).unwrap()
    }

    fn sorted(mut v: Vec<[f64; 3]>) -> Vec<[f64; 3]> {
        for p in &mut v {
            for c in p.iter_mut() {
                *c = (*c * 1e9).round() / 1e9 + 0.0;
            }
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn unit_cube_corners() {
        let c = cube(0.0, 0.0, 0.0, 0.0).corners();
        assert_eq!(c[0], [0.5, 0.5, -0.5]);
        assert_eq!(c[1], [-0.5, 0.5, -0.5]);
        assert_eq!(c[2], [-0.5, -0.5, -0.5]);
        assert_eq!(c[3], [0.5, -0.5, -0.5]);
        assert_eq!(c[4], [0.5, 0.5, 0.5]);
        let rotated = cube(0.0, 0.0, 0.0, FRAC_PI_2).corners();
        assert_eq!(sorted(c.to_vec()), sorted(rotated.to_vec()));
    }

    #[test]
    fn corners_match_rotation_matrix() {
        // Independent: R(yaw) applied to the local offsets, then translated.
        let b = Box3::new([10.0, 5.0, 0.0], [4.0, 2.0, 1.0], 0.3).unwrap();
        let (s, c) = 0.3f64.sin_cos();
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let corners = b.corners();
        for (k, (sx, sy)) in signs.iter().enumerate() {
            let (lx, ly) = (sx * 2.0, sy * 1.0);
            let expect = [10.0 + c * lx - s * ly, 5.0 + s * lx + c * ly];
            for (idx, z) in [(k, -0.5), (k + 4, 0.5)] {
                assert!((corners[idx][0] - expect[0]).abs() < 1e-12);
                assert!((corners[idx][1] - expect[1]).abs() < 1e-12);
                assert_eq!(corners[idx][2], z);
            }
        }
        // (2, 1) rotated by 0.3 rad, then shifted
        assert!((corners[0][0] - 11.615_152_771_589_873).abs() < 1e-9);
        assert!((corners[0][1] - 6.546_376_902_448_285).abs() < 1e-9);
    }

    #[test]
    fn containment_closed_boundary() {
        let b = Box3::new([1.0, 2.0, 0.0], [2.0, 2.0, 2.0], 0.0).unwrap();
        let cloud = PointCloud::new(vec![[1.0, 2.0, 0.0], [2.0, 2.0, 0.0], [2.0, 3.0, 1.0], [2.01, 2.0, 0.0]]);
        assert_eq!(points_in_box(&cloud, &b), vec![0, 1, 2]);
    }

    #[test]
    fn box_validation() {
        assert!(Box3::new([0.0; 3], [1.0, -1.0, 1.0], 0.0).is_err());
        assert!(Box3::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
        assert!(Box3::new([f64::NAN, 0.0, 0.0], [1.0; 3], 0.0).is_err());
        let b = Box3::new([0.0; 3], [1.0; 3], 3.0 * PI).unwrap();
        assert!((b.yaw + PI).abs() < 1e-12);
        let err = Box3::new([0.0; 3], [1.0, -2.0, 1.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("scale.width"), "{err}");
    }

    #[test]
    fn rect_rules() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        let r = Rect::new(0.0, 0.0, 2.0, 4.0).unwrap();
        assert_eq!(r.center(), [1.0, 2.0]);
        assert!(r.contains(2.0, 4.0));
        assert!(!r.contains(2.0001, 4.0));
    }

    #[test]
    fn iou2d_examples() {
        let a = Rect::new(0.0f64, 0.0, 2.0, 2.0).unwrap();
        let b = Rect::new(1.0, 1.0, 3.0, 3.0).unwrap();
        let far = Rect::new(10.0, 10.0, 11.0, 11.0).unwrap();
        assert_eq!(iou2d(&a, &a), 1.0);
        assert_eq!(iou2d(&a, &far), 0.0);
        assert!((iou2d(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(iou2d(&a, &b), iou2d(&b, &a));
    }

    #[test]
    fn iou3d_axis_aligned_closed_form() {
        let a = cube(0.0, 0.0, 0.0, 0.0);
        let b = cube(0.5, 0.0, 0.0, 0.0);
        assert!((iou3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou3d(&a, &a), 1.0);
        assert_eq!(iou3d(&a, &cube(5.0, 0.0, 0.0, 0.0)), 0.0);
        assert_eq!(iou3d(&a, &cube(0.0, 0.0, 1.5, 0.0)), 0.0);
        // square symmetry
        assert!((iou3d(&a, &cube(0.0, 0.0, 0.0, FRAC_PI_2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou3d_rotated_square_overlap() {
        // Unit square vs. the same square rotated 45°: overlap is a regular
        // octagon of area 2(√2 − 1).
        let a = cube(0.0, 0.0, 0.0, 0.0);
        let b = cube(0.0, 0.0, 0.0, PI / 4.0);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert!((bev_intersection_area(&a, &b) - inter).abs() < 1e-12);
        assert!((iou3d(&a, &b) - inter / (2.0 - inter)).abs() < 1e-12);
    }

    #[test]
    fn optical_axis_projection() {
        let calib = Calibration::<f64>::new(
            [[700.0, 0.0, 600.0, 0.0], [0.0, 700.0, 180.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            (1242, 375),
        )
        .unwrap();
        let (ips, valid) = project_points(&calib, &[[0.0, 0.0, 10.0], [0.0, 0.0, -1.0]]);
        assert_eq!(ips[0], ImagePoint { u: 600.0, v: 180.0, depth: 10.0 });
        assert_eq!(valid, vec![true, false]);
    }

    #[test]
    fn box_projection_cases() {
        let calib = Calibration::<f64>::pinhole(700.0, 621.0, 187.5, (1242, 375));
        let behind = Box3::new([-10.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0).unwrap();
        assert!(project_box3d_to_rect(&calib, &behind).is_none());

        let ahead = Box3::new([20.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.2).unwrap();
        let r = project_box3d_to_rect(&calib, &ahead).unwrap();
        let (ips, _) = project_points(&calib, &ahead.corners());
        let umin = ips.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
        let umax = ips.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.xmin, umin);
        assert_eq!(r.xmax, umax);

        // LiDAR +y maps to image left; a box far to the left straddles u = 0.
        let left = Box3::new([10.0, 9.0, 0.0], [4.0, 2.0, 1.5], 0.0).unwrap();
        let r = project_box3d_to_rect(&calib, &left).unwrap();
        assert_eq!(r.xmin, 0.0);
        assert!(r.xmax > 0.0);
    }
}
