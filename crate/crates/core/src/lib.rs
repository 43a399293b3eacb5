//! Annotation assistance for LiDAR point clouds.
//!
//! * [`preannotate`] turns detector boxes into tight pre-annotations by
//!   threshold-gated box fitting.
//! * [`fusion`] projects those boxes into the camera image, matches them to
//!   2D detections and flags wrong boxes and missed objects.
//! * [`evaluation`] scores an annotation against a reference.
//!
//! Geometry and the pipelines are generic over the scalar type ([`Real`]);
//! the aliases below fix it to `f64`, which is what the CLI and service use.

pub mod assignment;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod io;
mod linalg;
pub mod preannotate;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::{normalize_angle, Real};

pub type Box3D = geometry::Box3<f64>;
pub type Box2D = geometry::Rect<f64>;
pub type ImagePoint = geometry::ImagePoint<f64>;
pub type PointCloud = io::PointCloud<f64>;
pub type Calibration = io::Calibration<f64>;
pub type Detection3D = io::Detection3D<f64>;
pub type Detection2D = io::Detection2D<f64>;
pub type DetectionFile = io::DetectionFile<f64>;
pub type AnnotationSession = io::AnnotationSession<f64>;
pub type SessionBox = io::SessionBox<f64>;
pub type PreannotateConfig = preannotate::PreannotateConfig<f64>;
pub type PreannotatedBox = preannotate::PreannotatedBox<f64>;
pub type FusionConfig = fusion::FusionConfig<f64>;
pub type FusionReport = fusion::FusionReport<f64>;
pub type LabeledBox = fusion::LabeledBox<f64>;
pub type CostMatrix = assignment::CostMatrix<f64>;

pub type Box3Df32 = geometry::Box3<f32>;
pub type Box2Df32 = geometry::Rect<f32>;
pub type PointCloudF32 = io::PointCloud<f32>;
pub type CalibrationF32 = io::Calibration<f32>;
