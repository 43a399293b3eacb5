use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic, Loaded};
use crate::scalar::Real;

const BYTES_PER_POINT: usize = 16;

/// LiDAR points in the sensor frame, meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<[T; 3]>,
    /// Per-point reflectance in `[0, 1]`, same length as `points` when present.
    pub intensity: Option<Vec<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<[T; 3]>) -> Self {
        PointCloud {
            points,
            intensity: None,
        }
    }

    pub fn with_intensity(points: Vec<[T; 3]>, intensity: Vec<T>) -> Result<Self> {
        if points.len() != intensity.len() {
            return Err(Error::validation(
                "intensity",
                format!("{} values for {} points", intensity.len(), points.len()),
            ));
        }
        Ok(PointCloud {
            points,
            intensity: Some(intensity),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::validation(format!("points[{i}]"), "non-finite coordinate"));
        }
        if let Some(int) = &self.intensity {
            if int.len() != self.points.len() {
                return Err(Error::validation("intensity", "length differs from point count"));
            }
        }
        Ok(())
    }

    /// Little-endian `f32` quadruples `(x, y, z, intensity)`; missing
    /// intensity is written as zero.
    pub fn to_velodyne_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * BYTES_PER_POINT);
        for (i, p) in self.points.iter().enumerate() {
            let r = self
                .intensity
                .as_ref()
                .map(|v| v[i])
                .unwrap_or_else(T::zero);
            for c in [p[0], p[1], p[2], r] {
                out.extend_from_slice(&(c.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
            }
        }
        out
    }
}

/// Decodes a KITTI velodyne buffer. Points with any non-finite component are
/// dropped and reported in the warnings; out-of-range intensities are clamped.
pub fn parse_point_cloud<T: Real>(bytes: &[u8]) -> Result<Loaded<PointCloud<T>>> {
    if !bytes.len().is_multiple_of(BYTES_PER_POINT) {
        return Err(Error::format(
            format!("byte {}", bytes.len() - bytes.len() % BYTES_PER_POINT),
            format!(
                "velodyne buffer length {} is not a multiple of {BYTES_PER_POINT}",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / BYTES_PER_POINT;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    let mut dropped = 0usize;
    let mut clamped = 0usize;
    for chunk in bytes.chunks_exact(BYTES_PER_POINT) {
        let mut v = [0f32; 4];
        for (k, word) in chunk.chunks_exact(4).enumerate() {
            v[k] = f32::from_le_bytes([word[0], word[1], word[2], word[3]]);
        }
        if !v.iter().all(|c| c.is_finite()) {
            dropped += 1;
            continue;
        }
        let r = v[3].clamp(0.0, 1.0);
        if r != v[3] {
            clamped += 1;
        }
        points.push([T::lit(v[0] as f64), T::lit(v[1] as f64), T::lit(v[2] as f64)]);
        intensity.push(T::lit(r as f64));
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} non-finite point(s)"));
    }
    if clamped > 0 {
        warnings.push(format!("clamped {clamped} intensity value(s) into [0, 1]"));
    }
    Ok(Loaded {
        value: PointCloud {
            points,
            intensity: Some(intensity),
        },
        warnings,
    })
}

pub fn load_point_cloud<T: Real>(path: impl AsRef<Path>) -> Result<Loaded<PointCloud<T>>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    parse_point_cloud(&bytes).map_err(|e| match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_point_cloud<T: Real>(path: impl AsRef<Path>, cloud: &PointCloud<T>) -> Result<()> {
    write_atomic(path.as_ref(), &cloud.to_velodyne_bytes())
}
