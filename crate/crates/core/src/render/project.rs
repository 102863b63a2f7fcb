use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::RenderSettings;
use crate::camera::{quat_to_matrix, Camera};
use crate::splat::{covariance_from_normalized, sigmoid, SplatCloud};
use crate::splat::sh::{sh_basis, sh_color_raw};

/// One Gaussian as seen from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Index into the source cloud.
    pub index: usize,
    pub mean2d: [f64; 2],
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d` as `(a, b, c)` = `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha: f64,
    pub radius: f64,
}

/// Camera-space quantities shared by projection and its gradient.
pub(crate) struct ProjectionFrame {
    pub p_cam: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub rotation: Matrix3<f64>,
    pub cov3d: Matrix3<f64>,
}

pub(crate) fn projection_frame(cloud: &SplatCloud, i: usize, camera: &Camera) -> ProjectionFrame {
    let p = &cloud.params;
    let mu = Vector3::from(p.positions[i]);
    let p_cam = camera.world_to_camera(&mu);
    let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
    let jacobian = Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
    );
    let rotation = quat_to_matrix(p.rotations[i]);
    let cov3d = covariance_from_normalized(p.log_scales[i], &rotation);
    ProjectionFrame {
        p_cam,
        jacobian,
        rotation,
        cov3d,
    }
}

#[inline]
pub(crate) fn screen_covariance(frame: &ProjectionFrame, camera: &Camera, dilation: f64) -> Matrix2<f64> {
    let t = frame.jacobian * camera.rotation;
    let mut cov = t * frame.cov3d * t.transpose();
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    cov[(0, 0)] += dilation;
    cov[(1, 1)] += dilation;
    cov
}

pub(crate) fn view_direction(mu: [f64; 3], center: &Vector3<f64>) -> [f64; 3] {
    let v = Vector3::from(mu) - center;
    let n = v.norm();
    if n > 0.0 {
        [v.x / n, v.y / n, v.z / n]
    } else {
        [0.0, 0.0, 1.0]
    }
}

fn project_one(
    cloud: &SplatCloud,
    i: usize,
    camera: &Camera,
    center: &Vector3<f64>,
    settings: &RenderSettings,
) -> Option<ProjectedGaussian> {
    let p = &cloud.params;
    if p.rotations[i].iter().all(|&v| v == 0.0) {
        return None;
    }
    let mu = Vector3::from(p.positions[i]);
    let z = camera.world_to_camera(&mu).z;
    if !(z > settings.near) {
        return None;
    }
    let frame = projection_frame(cloud, i, camera);
    let cov2d = screen_covariance(&frame, camera, settings.dilation);
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(0, 1)];
    if !(det > 0.0) {
        return None;
    }
    let conic = [cov2d[(1, 1)] / det, -cov2d[(0, 1)] / det, cov2d[(0, 0)] / det];
    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = (settings.cull_sigma * lambda_max.sqrt()).ceil().max(1.0);

    let (x, y) = (frame.p_cam.x, frame.p_cam.y);
    let mean2d = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];
    let (w, h) = (camera.width as f64, camera.height as f64);
    if mean2d[0] + radius < 0.0
        || mean2d[0] - radius > w
        || mean2d[1] + radius < 0.0
        || mean2d[1] - radius > h
    {
        return None;
    }

    let dir = view_direction(p.positions[i], center);
    let degree = cloud.active_sh_degree;
    let color = sh_color_raw(&cloud.sh_coeffs(i), degree, &sh_basis(dir, degree)).map(|c| c.max(0.0));

    Some(ProjectedGaussian {
        index: i,
        mean2d,
        cov2d,
        conic,
        depth: z,
        color,
        alpha: sigmoid(p.opacity_logits[i]),
        radius,
    })
}

/// Projects every Gaussian in front of the near plane whose screen disc
/// touches the image. Output follows source index order.
pub fn project(cloud: &SplatCloud, camera: &Camera, settings: &RenderSettings) -> Vec<ProjectedGaussian> {
    let center = camera.center();
    (0..cloud.len())
        .into_par_iter()
        .with_min_len(256)
        .filter_map(|i| project_one(cloud, i, camera, &center, settings))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, CameraPose};
    use crate::splat::SplatParams;

    fn identity_camera(w: usize, h: usize, f: f64) -> Camera {
        let pose = CameraPose {
            image_id: 1,
            q: [1.0, 0.0, 0.0, 0.0],
            t: [0.0; 3],
            camera_id: 1,
            image_name: "v".into(),
            num_observations: 0,
        };
        let mut intr = CameraIntrinsics::pinhole(1, w, h, f);
        intr.fy = 1.3 * f;
        Camera::new(&intr, &pose)
    }

    fn one(position: [f64; 3], log_scale: f64) -> SplatCloud {
        let mut p = SplatParams::zeros(1);
        p.positions[0] = position;
        p.log_scales[0] = [log_scale; 3];
        p.rotations[0] = [1.0, 0.0, 0.0, 0.0];
        SplatCloud::new(p, 0)
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let cam = identity_camera(64, 48, 50.0);
        for z in [0.5, 3.0, 40.0] {
            let g = &project(&one([0.0, 0.0, z], -3.0), &cam, &RenderSettings::default())[0];
            assert_eq!(g.mean2d, [cam.cx, cam.cy]);
            assert_eq!(g.depth, z);
        }
    }

    #[test]
    fn isotropic_screen_covariance() {
        // Oracle: explicit J·W·Σ·Wᵀ·Jᵀ with W = I and Σ = σ² I on the axis.
        let cam = identity_camera(64, 48, 50.0);
        let (sigma, z): (f64, f64) = (0.05, 2.5);
        let g = &project(&one([0.0, 0.0, z], sigma.ln()), &cam, &RenderSettings::default())[0];
        let j = Matrix2x3::new(cam.fx / z, 0.0, 0.0, 0.0, cam.fy / z, 0.0);
        let expected = j * (Matrix3::identity() * sigma * sigma) * j.transpose()
            + Matrix2::identity() * 0.3;
        assert!((g.cov2d - expected).abs().max() < 1e-12);
        let sx = cam.fx * sigma / z;
        let sy = cam.fy * sigma / z;
        assert!((g.cov2d[(0, 0)] - (sx * sx + 0.3)).abs() < 1e-12);
        assert!((g.cov2d[(1, 1)] - (sy * sy + 0.3)).abs() < 1e-12);
        assert_eq!(g.radius, (3.0 * (sy * sy + 0.3f64).sqrt()).ceil());
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = identity_camera(64, 48, 50.0);
        assert!(project(&one([0.0, 0.0, -1.0], -3.0), &cam, &RenderSettings::default()).is_empty());
        assert!(project(&one([0.0, 0.0, 0.1], -3.0), &cam, &RenderSettings::default()).is_empty());
    }

    #[test]
    fn off_screen_is_culled() {
        let cam = identity_camera(64, 48, 50.0);
        assert!(project(&one([10.0, 0.0, 1.0], -3.0), &cam, &RenderSettings::default()).is_empty());
    }
}
