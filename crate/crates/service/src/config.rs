use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use palf_core::evaluation::DEFAULT_MIN_IOU3D;
use palf_core::io::{DEFAULT_CAMERA_KEY, DEFAULT_IMAGE_SIZE};
use palf_core::{FusionConfig, PreannotateConfig};
use serde::Deserialize;

use crate::ServiceError;

pub const ENV_DATASET_ROOT: &str = "PALF_DATASET_ROOT";
pub const ENV_PORT: &str = "PALF_PORT";

/// Service settings. Every field has a default, so an empty file is valid.
///
/// ```toml
/// dataset_root = "/data/kitti/training"
/// port = 8080
///
/// [fusion]
/// iou2d_threshold = 0.6
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub dataset_root: PathBuf,
    pub bind: IpAddr,
    pub port: u16,
    pub camera_key: String,
    /// Used when a frame has no image to read the size from.
    pub image_size: (u32, u32),
    pub preannotate: PreannotateConfig,
    pub fusion: FusionConfig,
    pub min_iou3d: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            dataset_root: PathBuf::from("."),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            camera_key: DEFAULT_CAMERA_KEY.to_string(),
            image_size: DEFAULT_IMAGE_SIZE,
            preannotate: PreannotateConfig::default(),
            fusion: FusionConfig::default(),
            min_iou3d: DEFAULT_MIN_IOU3D,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ServiceError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (defaults when `None`), then applies the process
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(root) = lookup(ENV_DATASET_ROOT) {
            self.dataset_root = PathBuf::from(root);
        }
        if let Some(port) = lookup(ENV_PORT) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_PORT}: `{port}` is not a port number")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let core = |e: palf_core::Error| ServiceError::Config(e.to_string());
        self.preannotate.validate().map_err(core)?;
        self.fusion.validate().map_err(core)?;
        if !(0.0..=1.0).contains(&self.min_iou3d) {
            return Err(ServiceError::Config("min_iou3d must lie in [0, 1]".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(ServiceError::Config("image_size must be positive".into()));
        }
        Ok(())
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}
