//! External file formats: COLMAP text exports, the splat PLY interchange
//! layout, and training images.

mod colmap;
mod diagnose;
mod ply;
mod ppm;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Vector3;

pub use colmap::{
    parse_colmap_dir, parse_colmap_text, read_cameras_txt, read_images_txt, read_points3d_txt,
    write_colmap_text, ColmapModel,
};
pub use diagnose::diagnose_registration;
pub use ply::{decode_splat_ply, encode_splat_ply, read_splat_ply, write_splat_ply, PLY_PROPERTIES};
pub use ppm::{decode_ppm, encode_ppm, read_image, write_image, write_image_with_depth, BitDepth};

use crate::camera::{Camera, CameraIntrinsics, CameraPose, SceneExtent};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Triangulated SfM points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparsePoints {
    pub point_ids: Vec<u64>,
    pub positions: Vec<[f64; 3]>,
    /// RGB in `[0, 255]`.
    pub colors: Vec<[u8; 3]>,
    /// Number of images observing each point.
    pub track_lengths: Vec<usize>,
}

impl SparsePoints {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    /// Fewer registered views than cameras in the rig.
    MissingViews {
        registered: usize,
        expected: usize,
        names: Vec<String>,
    },
    /// Two poses whose centers nearly coincide; SfM may have merged views.
    MergedViews {
        first: String,
        second: String,
        distance: f64,
    },
    /// A view linked to too few sparse points to be well constrained.
    SparseView { image: String, observed: usize },
    RadialDistortionIgnored { camera_id: u32 },
    DroppedPoint { point_id: u64, track_length: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DiagnosticKind::MissingViews {
                registered,
                expected,
                names,
            } => write!(
                f,
                "missing view: {} of {} cameras registered (registered: {})",
                registered,
                expected,
                names.join(", ")
            ),
            DiagnosticKind::MergedViews {
                first,
                second,
                distance,
            } => write!(
                f,
                "merged/duplicate view: {} and {} have camera centers {:.3e} apart",
                first, second, distance
            ),
            DiagnosticKind::SparseView { image, observed } => write!(
                f,
                "sparse view: {} observes only {} sparse points",
                image, observed
            ),
            DiagnosticKind::RadialDistortionIgnored { camera_id } => write!(
                f,
                "camera {}: SIMPLE_RADIAL distortion ignored (pinhole assumed)",
                camera_id
            ),
            DiagnosticKind::DroppedPoint {
                point_id,
                track_length,
            } => write!(
                f,
                "point {} dropped: track length {} < 2",
                point_id, track_length
            ),
        }
    }
}

/// A fully cross-linked reconstruction input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneBundle {
    pub intrinsics: BTreeMap<u32, CameraIntrinsics>,
    pub poses: Vec<CameraPose>,
    pub points: SparsePoints,
    pub images: BTreeMap<String, ImageBuffer>,
    pub warnings: Vec<Diagnostic>,
}

impl SceneBundle {
    pub fn camera(&self, view: usize) -> Camera {
        let pose = &self.poses[view];
        Camera::new(&self.intrinsics[&pose.camera_id], pose)
    }

    pub fn cameras(&self) -> Vec<Camera> {
        (0..self.poses.len()).map(|i| self.camera(i)).collect()
    }

    pub fn image(&self, view: usize) -> Option<&ImageBuffer> {
        self.images.get(&self.poses[view].image_name)
    }

    pub fn view_index(&self, image_name: &str) -> Option<usize> {
        self.poses.iter().position(|p| p.image_name == image_name)
    }

    pub fn camera_centers(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.center()).collect()
    }

    pub fn extent(&self) -> SceneExtent {
        SceneExtent::from_camera_centers(&self.camera_centers())
    }

    /// Splits views by name into (kept, removed); points are shared.
    pub fn split_views(&self, removed: &[String]) -> (SceneBundle, SceneBundle) {
        let mut kept = self.clone();
        let mut taken = SceneBundle {
            intrinsics: self.intrinsics.clone(),
            points: self.points.clone(),
            ..Default::default()
        };
        kept.poses.clear();
        kept.images.clear();
        for pose in &self.poses {
            let target = if removed.contains(&pose.image_name) {
                &mut taken
            } else {
                &mut kept
            };
            target.poses.push(pose.clone());
            if let Some(img) = self.images.get(&pose.image_name) {
                target.images.insert(pose.image_name.clone(), img.clone());
            }
        }
        (kept, taken)
    }

    /// Every pose must resolve to a camera, and every loaded image must match
    /// its camera's dimensions.
    pub fn check_links(&self) -> Result<()> {
        for pose in &self.poses {
            let intr = self.intrinsics.get(&pose.camera_id).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "image {} references unknown camera {}",
                    pose.image_name, pose.camera_id
                ))
            })?;
            if let Some(img) = self.images.get(&pose.image_name) {
                if (img.width, img.height) != (intr.width, intr.height) {
                    return Err(Error::ImageSizeMismatch {
                        name: pose.image_name.clone(),
                        camera_id: pose.camera_id,
                        actual: (img.width, img.height),
                        expected: (intr.width, intr.height),
                    });
                }
            }
        }
        Ok(())
    }
}
