//! KITTI-style dataset directory layout shared by the CLI and the service.
//!
//! ```text
//! <root>/velodyne/<id>.bin         LiDAR scan
//! <root>/calib/<id>.txt            calibration
//! <root>/image_2/<id>.png          camera image (optional; only its size is read)
//! <root>/detections/<id>.json      detector output (3D and 2D)
//! <root>/label_2/<id>.txt          KITTI labels (optional reference)
//! <root>/ground_truth/<name>/<id>.json   reference annotations, detection schema
//! <root>/sessions/<id>.json        annotator sessions (written by the service)
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{self, Calibration, Loaded, PointCloud, DEFAULT_CAMERA_KEY, DEFAULT_IMAGE_SIZE};
use crate::scalar::Real;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub camera_key: String,
    /// Used when the frame has no readable image.
    pub default_image_size: (u32, u32),
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout {
            root: root.into(),
            camera_key: DEFAULT_CAMERA_KEY.to_owned(),
            default_image_size: DEFAULT_IMAGE_SIZE,
        }
    }

    pub fn velodyne(&self, id: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{id}.bin"))
    }

    pub fn calib(&self, id: &str) -> PathBuf {
        self.root.join("calib").join(format!("{id}.txt"))
    }

    pub fn detections(&self, id: &str) -> PathBuf {
        self.root.join("detections").join(format!("{id}.json"))
    }

    pub fn kitti_label(&self, id: &str) -> PathBuf {
        self.root.join("label_2").join(format!("{id}.txt"))
    }

    pub fn ground_truth(&self, name: &str, id: &str) -> PathBuf {
        self.root.join("ground_truth").join(name).join(format!("{id}.json"))
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn session(&self, id: &str) -> PathBuf {
        self.sessions_dir().join(format!("{id}.json"))
    }

    pub fn image(&self, id: &str) -> Option<PathBuf> {
        IMAGE_EXTENSIONS
            .iter()
            .map(|ext| self.root.join("image_2").join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
    }

    /// Frame ids with a velodyne scan, sorted.
    pub fn frame_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("velodyne");
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn has_frame(&self, id: &str) -> bool {
        valid_frame_id(id) && self.velodyne(id).is_file()
    }

    /// Image size from the image header, else the configured default.
    pub fn image_size(&self, id: &str) -> (u32, u32) {
        self.image(id)
            .and_then(|p| image::image_dimensions(p).ok())
            .unwrap_or(self.default_image_size)
    }

    pub fn load_cloud<T: Real>(&self, id: &str) -> Result<Loaded<PointCloud<T>>> {
        io::load_point_cloud(self.velodyne(id))
    }

    pub fn load_calibration<T: Real>(&self, id: &str) -> Result<Calibration<T>> {
        io::load_calibration(self.calib(id), &self.camera_key, self.image_size(id))
    }
}

/// Frame ids are plain file stems: no separators or parent references.
pub fn valid_frame_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Parses `000010,000012-000015` style selections. Ranges keep the zero
/// padding of their lower bound.
pub fn parse_frame_selection(selection: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for part in selection.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = part.split_once('-') {
            let width = lo.len();
            let (a, b) = (lo.parse::<u64>(), hi.parse::<u64>());
            match (a, b) {
                (Ok(a), Ok(b)) if a <= b => {
                    out.extend((a..=b).map(|i| format!("{i:0width$}")));
                }
                _ => return Err(Error::validation("frames", format!("bad range `{part}`"))),
            }
        } else if valid_frame_id(part) {
            out.push(part.to_owned());
        } else {
            return Err(Error::validation("frames", format!("bad frame id `{part}`")));
        }
    }
    Ok(out)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
