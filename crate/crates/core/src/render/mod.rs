//! Forward rendering: projection to screen-space Gaussians, depth sort and
//! front-to-back alpha compositing, plus a brute-force reference renderer.
//!
//! Pixel `(x, y)` is sampled at `(x + 0.5, y + 0.5)`.

mod composite;
mod oracle;
mod project;

pub use composite::{composite, render, RenderOutput};
pub use oracle::oracle_render;
pub use project::{project, ProjectedGaussian};

pub(crate) use composite::{walk_pixel, Contribution, TILE};
pub(crate) use project::{projection_frame, screen_covariance, view_direction};

/// Compositing constants. Defaults are the usual splatting values; tests
/// relax the shortcuts when comparing against [`oracle_render`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Gaussians at camera depth ≤ `near` are culled.
    pub near: f64,
    /// Added to the diagonal of every screen-space covariance, in px².
    pub dilation: f64,
    pub alpha_max: f64,
    /// Contributions with α' below this are skipped.
    pub alpha_min: f64,
    /// A pixel stops compositing once transmittance falls below this.
    pub t_min: f64,
    /// Screen radius in standard deviations of the major axis.
    pub cull_sigma: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            near: 0.2,
            dilation: 0.3,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            t_min: 1e-4,
            cull_sigma: 3.0,
        }
    }
}

impl RenderSettings {
    /// No skipping and no early termination, with a screen radius wide
    /// enough (8σ, weight below 1.3e-14) that culling is numerically invisible.
    pub fn exact() -> Self {
        Self {
            alpha_min: 0.0,
            t_min: 0.0,
            cull_sigma: 8.0,
            ..Self::default()
        }
    }
}
