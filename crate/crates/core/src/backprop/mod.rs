//! Analytic gradients of a pixel-space loss with respect to every Gaussian
//! parameter.
//!
//! Each pixel's compositing sequence is replayed front to back and then
//! walked back to front with a suffix-color accumulator, so
//! `∂C/∂α'_i = T_i (c_i − S_i)` where `S_i` is the color composited behind
//! Gaussian `i`. Blends that hit the α clamp, were skipped, or lie past the
//! termination point receive zero gradient, mirroring the forward pass.

mod fd;

pub use fd::{finite_difference_check, FdCoordinate, FdOptions, FdReport, PixelLoss};

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::render::{
    projection_frame, screen_covariance, view_direction, walk_pixel, Contribution, RenderOutput, TILE,
};
use crate::splat::sh::{coeff_count, sh_basis_with_grad, sh_color_raw};
use crate::splat::{SplatCloud, SplatParams, SH_COEFFS};

/// Gradients congruent with the cloud's parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub params: SplatParams,
    /// `|∂L/∂mean2d|₂` per Gaussian, in pixels.
    pub view_space_grad_norm: Vec<f64>,
}

impl GradientSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            params: SplatParams::zeros(n),
            view_space_grad_norm: vec![0.0; n],
        }
    }
}

/// Screen-space gradient accumulators for one projected Gaussian.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    /// With respect to the conic entries `(a, b, c)`, `b` counted once.
    conic: [f64; 3],
    color: [f64; 3],
    /// With respect to the activated opacity.
    opacity: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Back-propagates `dl_dpixels` (same layout as the rendered image) through
/// compositing and projection.
pub fn backward(
    cloud: &SplatCloud,
    camera: &Camera,
    rendered: &RenderOutput,
    dl_dpixels: &[f64],
) -> Result<GradientSet> {
    let (width, height) = (rendered.color.width, rendered.color.height);
    if dl_dpixels.len() != 3 * width * height {
        return Err(Error::ShapeMismatch(format!(
            "pixel gradient has {} entries, image needs {}",
            dl_dpixels.len(),
            3 * width * height
        )));
    }
    if rendered.num_gaussians() != cloud.len() || (camera.width, camera.height) != (width, height) {
        return Err(Error::ShapeMismatch(
            "render output does not belong to this cloud and camera".into(),
        ));
    }
    let sorted = &rendered.sorted;
    let bins = &rendered.bins;
    let settings = &rendered.settings;
    let bg = rendered.background;

    // Per band, dense accumulators over sorted slots; bands reduce in order.
    let band_grads: Vec<Vec<ScreenGrad>> = (0..bins.tiles_y)
        .into_par_iter()
        .map(|ty| {
            let mut acc = vec![ScreenGrad::default(); sorted.len()];
            let mut seq: Vec<Contribution> = Vec::new();
            let y_end = ((ty + 1) * TILE).min(height);
            for y in ty * TILE..y_end {
                for x in 0..width {
                    let o = 3 * (y * width + x);
                    let dl_dc = [dl_dpixels[o], dl_dpixels[o + 1], dl_dpixels[o + 2]];
                    if dl_dc == [0.0; 3] {
                        continue;
                    }
                    seq.clear();
                    let list = bins.list(x / TILE, ty);
                    walk_pixel(sorted, list, x as f64 + 0.5, y as f64 + 0.5, settings, |k| {
                        seq.push(*k)
                    });
                    let mut suffix = bg;
                    for k in seq.iter().rev() {
                        let g = &sorted[k.slot as usize];
                        let a = &mut acc[k.slot as usize];
                        let w = k.alpha * k.t_before;
                        let mut dl_dalpha = 0.0;
                        for ch in 0..3 {
                            a.color[ch] += w * dl_dc[ch];
                            dl_dalpha += dl_dc[ch] * (g.color[ch] - suffix[ch]);
                            suffix[ch] = g.color[ch] * k.alpha + (1.0 - k.alpha) * suffix[ch];
                        }
                        dl_dalpha *= k.t_before;
                        if k.clamped {
                            continue;
                        }
                        a.opacity += dl_dalpha * k.weight;
                        let dl_dpower = dl_dalpha * g.alpha * k.weight;
                        let [ca, cb, cc] = g.conic;
                        // power = -0.5 (a dx² + 2b dx dy + c dy²), d = pixel − mean
                        a.mean[0] += dl_dpower * (ca * k.dx + cb * k.dy);
                        a.mean[1] += dl_dpower * (cb * k.dx + cc * k.dy);
                        a.conic[0] += dl_dpower * (-0.5 * k.dx * k.dx);
                        a.conic[1] += dl_dpower * (-k.dx * k.dy);
                        a.conic[2] += dl_dpower * (-0.5 * k.dy * k.dy);
                    }
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![ScreenGrad::default(); sorted.len()];
    for band in &band_grads {
        for (s, b) in screen.iter_mut().zip(band) {
            s.add(b);
        }
    }
    drop(band_grads);

    let center = camera.center();
    let rows: Vec<(usize, GaussianGrad)> = sorted
        .par_iter()
        .zip(screen.par_iter())
        .map(|(g, sg)| (g.index, gaussian_backward(cloud, camera, &center, g.index, sg, rendered)))
        .collect();

    let mut out = GradientSet::zeros(cloud.len());
    for (i, gg) in rows {
        out.params.positions[i] = gg.position;
        out.params.log_scales[i] = gg.log_scale;
        out.params.rotations[i] = gg.rotation;
        out.params.opacity_logits[i] = gg.opacity_logit;
        out.params.sh_dc[i] = gg.sh_dc;
        out.params.sh_rest[i] = gg.sh_rest;
        out.view_space_grad_norm[i] = gg.view_space_grad_norm;
    }
    Ok(out)
}

struct GaussianGrad {
    position: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity_logit: f64,
    sh_dc: [f64; 3],
    sh_rest: [f64; 45],
    view_space_grad_norm: f64,
}

/// Partial derivatives of the rotation matrix of a unit quaternion
/// `(w, x, y, z)` with respect to each component.
fn rotation_partials(q: [f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = q;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

fn gaussian_backward(
    cloud: &SplatCloud,
    camera: &Camera,
    center: &Vector3<f64>,
    i: usize,
    sg: &ScreenGrad,
    rendered: &RenderOutput,
) -> GaussianGrad {
    let p = &cloud.params;
    let settings = &rendered.settings;
    let alpha = crate::splat::sigmoid(p.opacity_logits[i]);
    let opacity_logit = sg.opacity * alpha * (1.0 - alpha);

    // Color through the SH basis and the zero clamp.
    let degree = cloud.active_sh_degree;
    let mu = p.positions[i];
    let v = Vector3::from(mu) - center;
    let vnorm = v.norm();
    let dir = view_direction(mu, center);
    let (basis, basis_grad) = sh_basis_with_grad(dir, degree);
    let coeffs = cloud.sh_coeffs(i);
    let raw = sh_color_raw(&coeffs, degree, &basis);
    let mut sh_dc = [0.0; 3];
    let mut sh_rest = [0.0; 45];
    let mut dl_ddir = [0.0; 3];
    for ch in 0..3 {
        if raw[ch] < 0.0 {
            continue;
        }
        let dc = sg.color[ch];
        sh_dc[ch] = dc * basis[0];
        for k in 1..coeff_count(degree) {
            sh_rest[ch * (SH_COEFFS - 1) + k - 1] = dc * basis[k];
            for a in 0..3 {
                dl_ddir[a] += dc * coeffs[ch][k] * basis_grad[k][a];
            }
        }
    }
    let mut dl_dmu = Vector3::zeros();
    if degree > 0 && vnorm > 0.0 {
        let d = Vector3::from(dir);
        let g = Vector3::from(dl_ddir);
        dl_dmu += (g - d * d.dot(&g)) / vnorm;
    }

    // Conic → screen covariance: dL/dΣ₂ = −M G M with M the conic matrix.
    let frame = projection_frame(cloud, i, camera);
    let cov2d = screen_covariance(&frame, camera, settings.dilation);
    let inv = cov2d.try_inverse().unwrap_or_else(Matrix2::zeros);
    let inv = 0.5 * (inv + inv.transpose());
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov2d = -(inv * g_conic * inv);

    // Σ₂ = T Σ Tᵀ + dilation·I with T = J W.
    let w = camera.rotation;
    let t = frame.jacobian * w;
    let g_cov3d: Matrix3<f64> = t.transpose() * g_cov2d * t;
    let g_t: Matrix2x3<f64> = 2.0 * g_cov2d * t * frame.cov3d;
    let g_j: Matrix2x3<f64> = g_t * w.transpose();

    // Mean and Jacobian → camera-space position.
    let (x, y, z) = (frame.p_cam.x, frame.p_cam.y, frame.p_cam.z);
    let (fx, fy) = (camera.fx, camera.fy);
    let (z2, z3) = (z * z, z * z * z);
    let dm = sg.mean;
    let dl_dpcam = Vector3::new(
        dm[0] * fx / z + g_j[(0, 2)] * (-fx / z2),
        dm[1] * fy / z + g_j[(1, 2)] * (-fy / z2),
        dm[0] * (-fx * x / z2)
            + dm[1] * (-fy * y / z2)
            + g_j[(0, 0)] * (-fx / z2)
            + g_j[(0, 2)] * (2.0 * fx * x / z3)
            + g_j[(1, 1)] * (-fy / z2)
            + g_j[(1, 2)] * (2.0 * fy * y / z3),
    );
    dl_dmu += w.transpose() * dl_dpcam;

    // Σ = R diag(e^{2s}) Rᵀ.
    let r = frame.rotation;
    let s2 = p.log_scales[i].map(|v| (2.0 * v).exp());
    let rgr = r.transpose() * g_cov3d * r;
    let log_scale = [0, 1, 2].map(|k| 2.0 * s2[k] * rgr[(k, k)]);
    let g_r = 2.0 * g_cov3d * r * Matrix3::from_diagonal(&Vector3::from(s2));

    // Rotation → normalized quaternion → stored quaternion.
    let q = p.rotations[i];
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qhat = q.map(|v| v / qn);
    let partials = rotation_partials(qhat);
    let g_qhat: [f64; 4] = partials.map(|d| g_r.component_mul(&d).sum());
    let dot: f64 = (0..4).map(|k| g_qhat[k] * qhat[k]).sum();
    let rotation = [0, 1, 2, 3].map(|k| (g_qhat[k] - qhat[k] * dot) / qn);

    GaussianGrad {
        position: [dl_dmu.x, dl_dmu.y, dl_dmu.z],
        log_scale,
        rotation,
        opacity_logit,
        sh_dc,
        sh_rest,
        view_space_grad_norm: (dm[0] * dm[0] + dm[1] * dm[1]).sqrt(),
    }
}
