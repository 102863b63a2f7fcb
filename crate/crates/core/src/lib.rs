//! Gaussian splatting reconstruction for sparse multi-camera rigs: COLMAP
//! ingestion, differentiable CPU rasterization, training with adaptive
//! density control, floater pruning, and a synthetic camera-rig harness.

pub mod backprop;
pub mod camera;
pub mod error;
pub mod formats;
pub mod image;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod prune;
pub mod render;
pub mod splat;
pub mod synth;
pub mod train;

pub use camera::{Camera, CameraIntrinsics, CameraModel, CameraPose, SceneExtent};
pub use error::{Error, Result};
pub use formats::{SceneBundle, SparsePoints};
pub use image::ImageBuffer;
pub use render::{RenderOutput, RenderSettings};
pub use splat::{SplatCloud, SplatParams};
