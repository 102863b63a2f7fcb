use rayon::prelude::*;

use super::{project, ProjectedGaussian, RenderSettings};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::splat::SplatCloud;

/// Tile edge in pixels. A band is one row of tiles and is the unit of
/// parallel work.
pub(crate) const TILE: usize = 16;

/// Per-tile lists of depth-sorted slots whose screen disc bounding box
/// overlaps the tile.
#[derive(Debug, Clone)]
pub(crate) struct TileBins {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    #[inline]
    pub fn list(&self, tx: usize, ty: usize) -> &[u32] {
        &self.lists[ty * self.tiles_x + tx]
    }
}

pub(crate) fn bin_tiles(sorted: &[ProjectedGaussian], width: usize, height: usize) -> TileBins {
    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, g) in sorted.iter().enumerate() {
        let x0 = ((g.mean2d[0] - g.radius).floor().max(0.0) as usize) / TILE;
        let y0 = ((g.mean2d[1] - g.radius).floor().max(0.0) as usize) / TILE;
        let x1 = (((g.mean2d[0] + g.radius).ceil().max(0.0) as usize) / TILE).min(tiles_x - 1);
        let y1 = (((g.mean2d[1] + g.radius).ceil().max(0.0) as usize) / TILE).min(tiles_y - 1);
        for ty in y0..=y1.min(tiles_y - 1) {
            for tx in x0.min(tiles_x - 1)..=x1 {
                lists[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }
    TileBins {
        tiles_x,
        tiles_y,
        lists,
    }
}

/// One accepted blend at one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    pub slot: u32,
    /// Offset from the Gaussian mean to the pixel center.
    pub dx: f64,
    pub dy: f64,
    /// `exp(-0.5 dᵀ Σ⁻¹ d)`.
    pub weight: f64,
    pub alpha: f64,
    /// True when `alpha` hit the `alpha_max` clamp.
    pub clamped: bool,
    /// Transmittance before this blend.
    pub t_before: f64,
}

/// Walks the depth-ordered list at one pixel, calling `visit` for every
/// accepted blend. Returns the final transmittance.
#[inline]
pub(crate) fn walk_pixel(
    sorted: &[ProjectedGaussian],
    list: &[u32],
    px: f64,
    py: f64,
    settings: &RenderSettings,
    mut visit: impl FnMut(&Contribution),
) -> f64 {
    let mut t = 1.0;
    for &slot in list {
        let g = &sorted[slot as usize];
        let dx = px - g.mean2d[0];
        let dy = py - g.mean2d[1];
        if dx * dx + dy * dy > g.radius * g.radius {
            continue;
        }
        let [a, b, c] = g.conic;
        let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        if power > 0.0 {
            continue;
        }
        let weight = power.exp();
        let raw = g.alpha * weight;
        let clamped = raw > settings.alpha_max;
        let alpha = if clamped { settings.alpha_max } else { raw };
        if alpha < settings.alpha_min {
            continue;
        }
        visit(&Contribution {
            slot,
            dx,
            dy,
            weight,
            alpha,
            clamped,
            t_before: t,
        });
        t *= 1.0 - alpha;
        if t < settings.t_min {
            break;
        }
    }
    t
}

/// A rendered view plus the per-Gaussian statistics used by density
/// control and support-based pruning.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ImageBuffer,
    pub final_transmittance: Vec<f64>,
    /// Max over pixels of `α'·T`, indexed like the source cloud.
    pub per_gaussian_max_blend: Vec<f64>,
    /// Filled from a backward pass via [`RenderOutput::accumulate_screen_grad`].
    pub screen_grad_accum: Vec<f64>,
    /// Gaussians that survived projection culling.
    pub touched: Vec<bool>,
    pub background: [f64; 3],
    pub settings: RenderSettings,
    pub(crate) sorted: Vec<ProjectedGaussian>,
    pub(crate) bins: TileBins,
}

impl RenderOutput {
    pub fn num_gaussians(&self) -> usize {
        self.touched.len()
    }

    /// Projected Gaussians in compositing (depth) order.
    pub fn compositing_order(&self) -> &[ProjectedGaussian] {
        &self.sorted
    }

    pub fn accumulate_screen_grad(&mut self, view_space_grad_norm: &[f64]) {
        for (acc, g) in self.screen_grad_accum.iter_mut().zip(view_space_grad_norm) {
            *acc += g;
        }
    }
}

/// Sorts by ascending depth, ties by source index.
pub(crate) fn depth_sorted(mut projected: Vec<ProjectedGaussian>) -> Vec<ProjectedGaussian> {
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    projected
}

/// Front-to-back compositing of one view's projected Gaussians.
/// `num_gaussians` is the size of the source cloud.
pub fn composite(
    projected: Vec<ProjectedGaussian>,
    num_gaussians: usize,
    width: usize,
    height: usize,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    for g in &projected {
        let det = g.cov2d[(0, 0)] * g.cov2d[(1, 1)] - g.cov2d[(0, 1)] * g.cov2d[(1, 0)];
        if !(det > 0.0) || g.index >= num_gaussians {
            return Err(Error::InvalidParameter(format!(
                "projected gaussian {} has a singular screen covariance or bad index",
                g.index
            )));
        }
    }
    let sorted = depth_sorted(projected);
    let bins = bin_tiles(&sorted, width, height);
    let mut color = ImageBuffer::new(width, height);
    let mut transmittance = vec![1.0; width * height];
    let band_px = TILE * width;

    let band_max: Vec<Vec<(u32, f64)>> = color
        .pixels
        .par_chunks_mut(3 * band_px)
        .zip(transmittance.par_chunks_mut(band_px))
        .enumerate()
        .map(|(ty, (rgb, trans))| {
            let mut best = vec![0.0f64; sorted.len()];
            let rows = trans.len() / width;
            for ry in 0..rows {
                let y = ty * TILE + ry;
                for x in 0..width {
                    let list = bins.list(x / TILE, ty);
                    let mut c = [0.0; 3];
                    let t = walk_pixel(&sorted, list, x as f64 + 0.5, y as f64 + 0.5, settings, |k| {
                        let g = &sorted[k.slot as usize];
                        let w = k.alpha * k.t_before;
                        for ch in 0..3 {
                            c[ch] += g.color[ch] * w;
                        }
                        let e = &mut best[k.slot as usize];
                        if w > *e {
                            *e = w;
                        }
                    });
                    let o = ry * width + x;
                    for ch in 0..3 {
                        rgb[3 * o + ch] = c[ch] + t * background[ch];
                    }
                    trans[o] = t;
                }
            }
            best.iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(slot, &w)| (slot as u32, w))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut per_gaussian_max_blend = vec![0.0; num_gaussians];
    for band in band_max {
        for (slot, w) in band {
            let idx = sorted[slot as usize].index;
            if w > per_gaussian_max_blend[idx] {
                per_gaussian_max_blend[idx] = w;
            }
        }
    }
    let mut touched = vec![false; num_gaussians];
    for g in &sorted {
        touched[g.index] = true;
    }
    Ok(RenderOutput {
        color,
        final_transmittance: transmittance,
        per_gaussian_max_blend,
        screen_grad_accum: vec![0.0; num_gaussians],
        touched,
        background,
        settings: *settings,
        sorted,
        bins,
    })
}

/// Projects and composites `cloud` as seen by `camera`.
pub fn render(
    cloud: &SplatCloud,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> RenderOutput {
    let projected = project(cloud, camera, settings);
    composite(projected, cloud.len(), camera.width, camera.height, background, settings)
        .expect("projection only emits invertible screen covariances")
}
