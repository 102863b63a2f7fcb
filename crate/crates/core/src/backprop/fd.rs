use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::backward;
use crate::camera::Camera;
use crate::error::Result;
use crate::image::ImageBuffer;
use crate::render::{render, walk_pixel, RenderOutput, RenderSettings, TILE};
use crate::splat::{ParamGroup, SplatCloud};

/// Step and exclusion settings for [`finite_difference_check`].
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    /// Step as a fraction of the coordinate's magnitude.
    pub rel_step: f64,
    /// Lower bound on the absolute step.
    pub min_step: f64,
    /// Distance from a clamp, skip or termination threshold that marks a
    /// Gaussian as boundary-adjacent.
    pub boundary_tol: f64,
    /// Relative-error denominator floor. Central differences of a loss
    /// summed over thousands of pixels carry absolute noise near 1e-10, so
    /// partials below this are compared in absolute terms. Set to zero for
    /// a purely relative comparison.
    pub error_floor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-4,
            min_step: 1e-6,
            boundary_tol: 1e-6,
            error_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdCoordinate {
    pub gaussian: usize,
    pub group: ParamGroup,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, Default)]
pub struct FdReport {
    pub coordinates: Vec<FdCoordinate>,
}

impl FdReport {
    pub fn checked(&self) -> impl Iterator<Item = &FdCoordinate> {
        self.coordinates.iter().filter(|c| !c.excluded)
    }

    pub fn num_excluded(&self) -> usize {
        self.coordinates.iter().filter(|c| c.excluded).count()
    }

    /// Fraction of non-excluded coordinates with relative error below `tol`.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        let total = self.checked().count();
        if total == 0 {
            return 1.0;
        }
        self.checked().filter(|c| c.rel_error < tol).count() as f64 / total as f64
    }

    pub fn count_above(&self, tol: f64) -> usize {
        self.checked().filter(|c| c.rel_error > tol).count()
    }

    pub fn worst(&self) -> Option<&FdCoordinate> {
        self.checked().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// A pixel loss: value and its gradient with respect to the rendered pixels.
pub type PixelLoss<'a> = dyn Fn(&ImageBuffer) -> Result<(f64, Vec<f64>)> + 'a;

/// Hash of every discrete decision the compositor made: which Gaussians
/// blended at which pixel, in which order, and which were clamped.
fn event_signature(out: &RenderOutput) -> u64 {
    let mut h = DefaultHasher::new();
    let (w, ht) = (out.color.width, out.color.height);
    for y in 0..ht {
        for x in 0..w {
            let list = out.bins.list(x / TILE, y / TILE);
            walk_pixel(&out.sorted, list, x as f64 + 0.5, y as f64 + 0.5, &out.settings, |k| {
                (out.sorted[k.slot as usize].index, k.clamped).hash(&mut h);
            });
            u32::MAX.hash(&mut h);
        }
    }
    h.finish()
}

/// Gaussians with a blend whose α' or resulting transmittance sits within
/// `tol` of a compositing threshold.
fn boundary_gaussians(out: &RenderOutput, tol: f64) -> Vec<bool> {
    let s = &out.settings;
    let mut flagged = vec![false; out.num_gaussians()];
    let (w, ht) = (out.color.width, out.color.height);
    let mut seen = Vec::new();
    for y in 0..ht {
        for x in 0..w {
            seen.clear();
            let mut near_t = false;
            let list = out.bins.list(x / TILE, y / TILE);
            walk_pixel(&out.sorted, list, x as f64 + 0.5, y as f64 + 0.5, s, |k| {
                let g = &out.sorted[k.slot as usize];
                let raw = g.alpha * k.weight;
                if (raw - s.alpha_max).abs() < tol || (raw - s.alpha_min).abs() < tol {
                    flagged[g.index] = true;
                }
                let t_after = k.t_before * (1.0 - k.alpha);
                if (t_after - s.t_min).abs() < tol {
                    near_t = true;
                }
                seen.push(g.index);
            });
            if near_t {
                for &i in &seen {
                    flagged[i] = true;
                }
            }
        }
    }
    flagged
}

/// Compares [`backward`] against central differences of `loss` for every
/// scalar parameter of every Gaussian. A coordinate is excluded when its
/// Gaussian sits near a compositing threshold in the base render, or when
/// either perturbed render makes a different discrete decision anywhere.
pub fn finite_difference_check(
    cloud: &SplatCloud,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
    loss: &PixelLoss<'_>,
    options: &FdOptions,
) -> Result<FdReport> {
    let base = render(cloud, camera, background, settings);
    let (_, dl) = loss(&base.color)?;
    let grads = backward(cloud, camera, &base, &dl)?;
    let base_sig = event_signature(&base);
    let near = boundary_gaussians(&base, options.boundary_tol);

    let eval = |c: &SplatCloud| -> Result<(f64, u64)> {
        let out = render(c, camera, background, settings);
        Ok((loss(&out.color)?.0, event_signature(&out)))
    };

    let mut report = FdReport::default();
    let mut work = cloud.clone();
    for i in 0..cloud.len() {
        for group in ParamGroup::ALL {
            let width = group.width();
            for k in 0..width {
                let idx = i * width + k;
                let x0 = cloud.params.group(group)[idx];
                let h = (options.rel_step * x0.abs()).max(options.min_step);
                work.params.group_mut(group)[idx] = x0 + h;
                let (lp, sp) = eval(&work)?;
                work.params.group_mut(group)[idx] = x0 - h;
                let (lm, sm) = eval(&work)?;
                work.params.group_mut(group)[idx] = x0;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads.params.group(group)[idx];
                let denom = analytic.abs().max(numeric.abs()).max(options.error_floor);
                report.coordinates.push(FdCoordinate {
                    gaussian: i,
                    group,
                    component: k,
                    analytic,
                    numeric,
                    rel_error: (analytic - numeric).abs() / denom,
                    excluded: near[i] || sp != base_sig || sm != base_sig,
                });
            }
        }
    }
    Ok(report)
}
