//! KITTI `label_2/*.txt` object labels. Boxes are stored in the rectified
//! camera frame (bottom-center position, rotation about camera y); they are
//! converted to LiDAR-frame [`Box3`]s on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Box3;
use crate::io::{read_text, Calibration, Detection3D};
use crate::scalar::Real;

const DONT_CARE: &str = "DontCare";

/// Parses label lines. `DontCare` rows are skipped; a 16th column, when
/// present, is used as the score (otherwise 1).
pub fn parse_kitti_labels<T: Real>(text: &str, calib: &Calibration<T>) -> Result<Vec<Detection3D<T>>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0] == DONT_CARE {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        if toks.len() != 15 && toks.len() != 16 {
            return Err(Error::format(loc(), format!("expected 15 or 16 fields, found {}", toks.len())));
        }
        let nums = toks[1..]
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(T::lit)
                    .ok_or_else(|| Error::format(loc(), format!("`{t}` is not a finite number")))
            })
            .collect::<Result<Vec<T>>>()?;
        // nums: trunc occ alpha x1 y1 x2 y2 h w l x y z ry [score]
        let (h, w, l) = (nums[7], nums[8], nums[9]);
        let bottom = [nums[10], nums[11], nums[12]];
        let ry = nums[13];
        let score = nums.get(14).copied().unwrap_or_else(T::one);

        // camera y points down, so the center sits h/2 above the bottom face
        let center_rect = [bottom[0], bottom[1] - h / T::lit(2.0), bottom[2]];
        let position = calib.rect_to_lidar(center_rect);
        let (s, c) = ry.sin_cos();
        let heading = calib.rect_direction_to_lidar([c, T::zero(), -s]);
        let yaw = heading[1].atan2(heading[0]);
        let bbox = Box3::new(position, [l, w, h], yaw).map_err(|e| Error::format(loc(), e.to_string()))?;
        out.push(Detection3D {
            bbox,
            class_label: toks[0].to_owned(),
            score: score.max(T::zero()).min(T::one()),
        });
    }
    Ok(out)
}

pub fn load_kitti_labels<T: Real>(path: impl AsRef<Path>, calib: &Calibration<T>) -> Result<Vec<Detection3D<T>>> {
    parse_kitti_labels(&read_text(path.as_ref())?, calib)
}
