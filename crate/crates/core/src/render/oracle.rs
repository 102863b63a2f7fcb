//! Deliberately slow reference renderer: every pixel visits every projected
//! Gaussian in exact depth order with no culling, bounding or early exit.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::RenderSettings;
use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::splat::{eval_sh_color, sigmoid, SplatCloud};

struct Splat2d {
    index: usize,
    depth: f64,
    mean: Vector2<f64>,
    inv_cov: Matrix2<f64>,
    color: [f64; 3],
    alpha: f64,
}

fn rotation(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        q[0] / n,
        q[1] / n,
        q[2] / n,
        q[3] / n,
    ));
    uq.to_rotation_matrix().into_inner()
}

/// Uses only `near`, `dilation` and `alpha_max` from `settings`.
pub fn oracle_render(
    cloud: &SplatCloud,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> ImageBuffer {
    let p = &cloud.params;
    let center = camera.center();
    let mut splats = Vec::new();
    for i in 0..cloud.len() {
        let mu = Vector3::from(p.positions[i]);
        let pc = camera.rotation * mu + camera.translation;
        if pc.z <= settings.near {
            continue;
        }
        let r = rotation(p.rotations[i]);
        let s = Matrix3::from_diagonal(&Vector3::from(p.log_scales[i].map(f64::exp)));
        let sigma = r * s * s * r.transpose();
        let j = Matrix2x3::new(
            camera.fx / pc.z,
            0.0,
            -camera.fx * pc.x / (pc.z * pc.z),
            0.0,
            camera.fy / pc.z,
            -camera.fy * pc.y / (pc.z * pc.z),
        );
        let w = camera.rotation;
        let cov = j * w * sigma * w.transpose() * j.transpose() + Matrix2::identity() * settings.dilation;
        let Some(inv_cov) = cov.try_inverse() else {
            continue;
        };
        let dir = (mu - center).normalize();
        let color = eval_sh_color(&cloud.sh_coeffs(i), cloud.active_sh_degree, [dir.x, dir.y, dir.z])
            .unwrap_or([0.0; 3]);
        splats.push(Splat2d {
            index: i,
            depth: pc.z,
            mean: Vector2::new(
                camera.fx * pc.x / pc.z + camera.cx,
                camera.fy * pc.y / pc.z + camera.cy,
            ),
            inv_cov,
            color,
            alpha: sigmoid(p.opacity_logits[i]),
        });
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let mut img = ImageBuffer::new(camera.width, camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for s in &splats {
                let d = px - s.mean;
                let m = (d.transpose() * s.inv_cov * d)[(0, 0)];
                let a = (s.alpha * (-0.5 * m).exp()).min(settings.alpha_max);
                for ch in 0..3 {
                    c[ch] += s.color[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            img.set(x, y, [0, 1, 2].map(|ch| c[ch] + t * background[ch]));
        }
    }
    img
}
