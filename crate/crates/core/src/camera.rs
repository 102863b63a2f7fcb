//! Camera intrinsics, world-to-camera poses, and the combined render camera.
//!
//! Conventions follow COLMAP: x right, y down, z forward, and
//! `x_cam = R(q) * x_world + t`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
}

impl CameraModel {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimpleRadial => "SIMPLE_RADIAL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SIMPLE_PINHOLE" => Some(CameraModel::SimplePinhole),
            "PINHOLE" => Some(CameraModel::Pinhole),
            "SIMPLE_RADIAL" => Some(CameraModel::SimpleRadial),
            _ => None,
        }
    }

    pub fn num_params(self) -> usize {
        match self {
            CameraModel::SimplePinhole => 3,
            CameraModel::Pinhole => 4,
            CameraModel::SimpleRadial => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub camera_id: u32,
    pub model: CameraModel,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Radial distortion for SIMPLE_RADIAL; ignored by the renderer.
    pub radial_k: f64,
}

impl CameraIntrinsics {
    pub fn pinhole(camera_id: u32, width: usize, height: usize, focal: f64) -> Self {
        Self {
            camera_id,
            model: CameraModel::Pinhole,
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            radial_k: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.fx > 0.0
            && self.fy > 0.0
            && (0.0..=self.width as f64).contains(&self.cx)
            && (0.0..=self.height as f64).contains(&self.cy)
            && (self.model != CameraModel::SimplePinhole || self.fx == self.fy);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "camera {} has invalid intrinsics {:?}",
                self.camera_id, self
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub image_id: u32,
    /// Unit quaternion (w, x, y, z), world-to-camera rotation.
    pub q: [f64; 4],
    /// World-to-camera translation.
    pub t: [f64; 3],
    pub camera_id: u32,
    pub image_name: String,
    /// Number of 2D observations linked to a sparse point (ids other than -1).
    pub num_observations: usize,
}

impl CameraPose {
    pub fn rotation(&self) -> Matrix3<f64> {
        quat_to_matrix(self.q)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.t)
    }

    /// Camera center in world coordinates: `-Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    /// World-to-camera pose of a camera at `eye` looking at `target`, with
    /// `up` mapping to image-up.
    pub fn look_at(
        image_id: u32,
        camera_id: u32,
        image_name: impl Into<String>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Self {
        let rotation = look_at_rotation(eye, target, up);
        let q = matrix_to_quat(&rotation);
        // Derive t from the stored quaternion so that center() round-trips.
        let t = -(quat_to_matrix(q) * eye);
        Self {
            image_id,
            q,
            t: [t.x, t.y, t.z],
            camera_id,
            image_name: image_name.into(),
            num_observations: 0,
        }
    }
}

/// Rows are camera right, down and forward axes expressed in world coordinates.
pub fn look_at_rotation(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - eye).normalize();
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

/// Rotation matrix of the normalized quaternion (w, x, y, z).
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn matrix_to_quat(m: &Matrix3<f64>) -> [f64; 4] {
    let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    let mut q = [uq.w, uq.i, uq.j, uq.k];
    if q[0] < 0.0 {
        q = q.map(|v| -v);
    }
    q
}

/// Everything the rasterizer needs to know about one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(intrinsics: &CameraIntrinsics, pose: &CameraPose) -> Self {
        Self {
            width: intrinsics.width,
            height: intrinsics.height,
            fx: intrinsics.fx,
            fy: intrinsics.fy,
            cx: intrinsics.cx,
            cy: intrinsics.cy,
            rotation: pose.rotation(),
            translation: pose.translation(),
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Pixel coordinates of a world point, or `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// Same pose rendered at `1/factor` resolution.
    pub fn downscaled(&self, factor: usize) -> Camera {
        if factor <= 1 {
            return self.clone();
        }
        let f = factor as f64;
        Camera {
            width: (self.width / factor).max(1),
            height: (self.height / factor).max(1),
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            rotation: self.rotation,
            translation: self.translation,
        }
    }
}

/// Normalization sphere for learning rates and split thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneExtent {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl SceneExtent {
    /// 1.1 × the radius of the sphere around the mean camera center that
    /// encloses every camera. Degenerate rigs fall back to radius 1.
    pub fn from_camera_centers(centers: &[Vector3<f64>]) -> Self {
        if centers.is_empty() {
            return Self {
                center: Vector3::zeros(),
                radius: 1.0,
            };
        }
        let center = centers.iter().fold(Vector3::zeros(), |acc, c| acc + c) / centers.len() as f64;
        let max_dist = centers
            .iter()
            .map(|c| (c - center).norm())
            .fold(0.0, f64::max);
        let radius = 1.1 * max_dist;
        Self {
            center,
            radius: if radius > 0.0 { radius } else { 1.0 },
        }
    }
}
