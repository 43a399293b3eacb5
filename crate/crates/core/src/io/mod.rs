//! On-disk formats: KITTI velodyne scans, calibration and label files, the
//! detection interchange JSON, and annotation session files.

mod calib;
mod cloud;
mod detections;
mod labels;
mod session;

pub use calib::{load_calibration, parse_calibration, Calibration, DEFAULT_CAMERA_KEY, DEFAULT_IMAGE_SIZE};
pub use cloud::{load_point_cloud, parse_point_cloud, save_point_cloud, PointCloud};
pub use detections::{
    load_detections, parse_detections, save_detections, Detection2D, Detection3D, DetectionFile,
};
pub use labels::{load_kitti_labels, parse_kitti_labels};
pub use session::{
    load_session, save_session, AnnotationSession, BoxStatus, EventKind, SessionBox, TimingEvent,
    SESSION_VERSION,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A parsed value plus the non-fatal problems encountered while reading it.
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded<V> {
    pub value: V,
    pub warnings: Vec<String>,
}

impl<V> Loaded<V> {
    pub fn clean(value: V) -> Self {
        Loaded {
            value,
            warnings: Vec::new(),
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` next to `path` and renames over it, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads 3D boxes from either a detection file or an annotation session.
/// Session boxes carry score 1.
pub fn parse_box_list<T: Real>(bytes: &[u8]) -> Result<Loaded<Vec<Detection3D<T>>>> {
    let is_session = serde_json::from_slice::<serde_json::Value>(bytes)
        .ok()
        .is_some_and(|v| v.get("palf_session").is_some());
    if is_session {
        let s = AnnotationSession::<T>::from_json_bytes(bytes)?;
        let boxes = s
            .boxes
            .into_iter()
            .map(|b| Detection3D {
                bbox: b.bbox,
                class_label: b.class_label,
                score: T::one(),
            })
            .collect();
        return Ok(Loaded::clean(boxes));
    }
    let Loaded { value, warnings } = parse_detections::<T>(bytes)?;
    Ok(Loaded {
        value: value.boxes3d,
        warnings,
    })
}

pub fn load_box_list<T: Real>(path: impl AsRef<Path>) -> Result<Loaded<Vec<Detection3D<T>>>> {
    parse_box_list(&read_bytes(path.as_ref())?)
}
