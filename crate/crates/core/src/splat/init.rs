use super::{logit, SplatCloud, SplatParams, SH_C0};
use crate::error::{Error, Result};
use crate::formats::SparsePoints;
use crate::knn::mean_knn_distances;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Scene extent radius; bounds the initial scales.
    pub extent: f64,
    pub initial_opacity: f64,
}

impl InitConfig {
    pub fn new(extent: f64) -> Self {
        Self {
            extent,
            initial_opacity: 0.1,
        }
    }
}

/// One isotropic Gaussian per sparse point, sized by the mean distance to
/// its three nearest neighbors.
pub fn init_from_sparse(points: &SparsePoints, config: &InitConfig) -> Result<SplatCloud> {
    let n = points.positions.len();
    if n == 0 {
        return Err(Error::EmptyInit);
    }
    if !(config.extent > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scene extent must be positive, got {}",
            config.extent
        )));
    }
    let lo = (1e-7 * config.extent).ln();
    let hi = (0.1 * config.extent).ln();
    let fallback = (0.01 * config.extent).ln();
    let knn = mean_knn_distances(&points.positions, 3);

    let mut params = SplatParams::zeros(n);
    let opacity = logit(config.initial_opacity);
    for i in 0..n {
        params.positions[i] = points.positions[i];
        let s = match knn[i] {
            Some(d) => d.ln().clamp(lo, hi),
            None => fallback,
        };
        params.log_scales[i] = [s; 3];
        params.rotations[i] = [1.0, 0.0, 0.0, 0.0];
        params.opacity_logits[i] = opacity;
        params.sh_dc[i] = points.colors[i].map(|c| (c as f64 / 255.0 - 0.5) / SH_C0);
    }
    Ok(SplatCloud::new(params, 0))
}
