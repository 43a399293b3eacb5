use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_text;
use crate::linalg::{self, Mat3, Mat34};
use crate::scalar::Real;

/// Left color camera of the KITTI rig.
pub const DEFAULT_CAMERA_KEY: &str = "P2";
/// KITTI image size used when no image header is available.
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1242, 375);

const RECT_KEY: &str = "R0_rect";
const VELO_KEY: &str = "Tr_velo_to_cam";
const ORTHONORMAL_TOL: f64 = 1e-3;

/// KITTI projection chain: LiDAR frame → rectified camera frame → pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration<T> {
    /// 3×4 camera projection (pixels).
    pub cam_projection: Mat34<T>,
    /// 3×3 rectifying rotation.
    pub rect_rotation: Mat3<T>,
    /// 3×4 rigid transform LiDAR → reference camera (meters).
    pub lidar_to_cam: Mat34<T>,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
}

impl<T: Real> Calibration<T> {
    pub fn new(
        cam_projection: Mat34<T>,
        rect_rotation: Mat3<T>,
        lidar_to_cam: Mat34<T>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let c = Calibration {
            cam_projection,
            rect_rotation,
            lidar_to_cam,
            image_size,
        };
        c.validate()?;
        Ok(c)
    }

    /// Pinhole camera looking down LiDAR +x with the KITTI axis convention
    /// (camera x = −LiDAR y, camera y = −LiDAR z, camera z = LiDAR x).
    pub fn pinhole(focal: T, cx: T, cy: T, image_size: (u32, u32)) -> Self {
        let (z, o) = (T::zero(), T::one());
        Calibration {
            cam_projection: [[focal, z, cx, z], [z, focal, cy, z], [z, z, o, z]],
            rect_rotation: [[o, z, z], [z, o, z], [z, z, o]],
            lidar_to_cam: [[z, -o, z, z], [z, z, -o, z], [o, z, z, z]],
            image_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .cam_projection
            .iter()
            .chain(self.lidar_to_cam.iter())
            .flatten()
            .chain(self.rect_rotation.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("calibration", "non-finite matrix entry"));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::validation("image_size", "must be strictly positive"));
        }
        let err = linalg::orthonormality_error(&self.rect_rotation);
        if err > T::lit(ORTHONORMAL_TOL) {
            return Err(Error::validation(
                RECT_KEY,
                format!("not orthonormal (max |RᵀR − I| = {err})"),
            ));
        }
        if linalg::inv3(&linalg::linear_part(&self.lidar_to_cam)).is_none() {
            return Err(Error::validation(VELO_KEY, "rotation block is singular"));
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        T::lit(self.image_size.0 as f64)
    }

    pub fn height(&self) -> T {
        T::lit(self.image_size.1 as f64)
    }

    /// LiDAR point → rectified camera frame.
    pub fn lidar_to_rect(&self, p: [T; 3]) -> [T; 3] {
        linalg::mul3(&self.rect_rotation, linalg::mul34(&self.lidar_to_cam, p))
    }

    /// Rectified camera point → LiDAR frame. Exact inverse of [`lidar_to_rect`].
    ///
    /// [`lidar_to_rect`]: Calibration::lidar_to_rect
    pub fn rect_to_lidar(&self, x: [T; 3]) -> [T; 3] {
        let cam = self.rect_direction_to_cam(x);
        let t = [
            self.lidar_to_cam[0][3],
            self.lidar_to_cam[1][3],
            self.lidar_to_cam[2][3],
        ];
        let rot = linalg::linear_part(&self.lidar_to_cam);
        let inv = linalg::inv3(&rot).expect("validated calibration");
        linalg::mul3(&inv, [cam[0] - t[0], cam[1] - t[1], cam[2] - t[2]])
    }

    /// Maps a direction in the rectified camera frame to the LiDAR frame
    /// (no translation).
    pub fn rect_direction_to_lidar(&self, d: [T; 3]) -> [T; 3] {
        let cam = self.rect_direction_to_cam(d);
        let inv = linalg::inv3(&linalg::linear_part(&self.lidar_to_cam)).expect("validated calibration");
        linalg::mul3(&inv, cam)
    }

    fn rect_direction_to_cam(&self, d: [T; 3]) -> [T; 3] {
        let inv = linalg::inv3(&self.rect_rotation).expect("validated calibration");
        linalg::mul3(&inv, d)
    }

    /// Rectified camera point → `(u·d, v·d, d)` homogeneous pixel triple.
    pub fn rect_to_homogeneous_pixel(&self, x: [T; 3]) -> [T; 3] {
        linalg::mul34(&self.cam_projection, x)
    }

    /// Renders the calibration in KITTI `calib/*.txt` layout.
    pub fn to_kitti_text(&self) -> String {
        fn row<T: Real>(key: &str, vals: impl Iterator<Item = T>) -> String {
            let body: Vec<String> = vals.map(|v| format!("{:.12e}", v.to_f64_lossy())).collect();
            format!("{key}: {}\n", body.join(" "))
        }
        let mut s = String::new();
        s += &row(DEFAULT_CAMERA_KEY, self.cam_projection.iter().flatten().copied());
        s += &row(RECT_KEY, self.rect_rotation.iter().flatten().copied());
        s += &row(VELO_KEY, self.lidar_to_cam.iter().flatten().copied());
        s
    }
}

/// Parses KITTI calibration text. `camera_key` selects the projection row
/// (normally `"P2"`); `image_size` is not stored in the file.
pub fn parse_calibration<T: Real>(
    text: &str,
    camera_key: &str,
    image_size: (u32, u32),
) -> Result<Calibration<T>> {
    let mut proj = None;
    let mut rect = None;
    let mut velo = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::format(
                format!("line {}", lineno + 1),
                "expected `KEY: values`",
            ));
        };
        let key = key.trim();
        let slot = if key == camera_key {
            &mut proj
        } else if key == RECT_KEY {
            &mut rect
        } else if key == VELO_KEY {
            &mut velo
        } else {
            continue;
        };
        let values = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::format(key, format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        *slot = Some(values);
    }

    let take = |slot: Option<Vec<f64>>, key: &str, n: usize| -> Result<Vec<T>> {
        let v = slot.ok_or_else(|| Error::format(key, format!("missing required key `{key}`")))?;
        if v.len() != n {
            return Err(Error::format(
                key,
                format!("expected {n} values, found {}", v.len()),
            ));
        }
        Ok(v.into_iter().map(T::lit).collect())
    };
    let p = take(proj, camera_key, 12)?;
    let r = take(rect, RECT_KEY, 9)?;
    let t = take(velo, VELO_KEY, 12)?;

    let m34 = |v: &[T]| -> Mat34<T> {
        [
            [v[0], v[1], v[2], v[3]],
            [v[4], v[5], v[6], v[7]],
            [v[8], v[9], v[10], v[11]],
        ]
    };
    let calib = Calibration {
        cam_projection: m34(&p),
        rect_rotation: [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
        lidar_to_cam: m34(&t),
        image_size,
    };
    calib.validate().map_err(|e| match e {
        Error::Validation { field, message } => Error::Format {
            location: field,
            message,
        },
        other => other,
    })?;
    Ok(calib)
}

pub fn load_calibration<T: Real>(
    path: impl AsRef<Path>,
    camera_key: &str,
    image_size: (u32, u32),
) -> Result<Calibration<T>> {
    let text = read_text(path.as_ref())?;
    parse_calibration(&text, camera_key, image_size)
}
