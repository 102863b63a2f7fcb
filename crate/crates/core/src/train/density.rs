use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::OptimizerState;
use super::config::TrainConfig;
use crate::camera::quat_to_matrix;
use crate::error::{Error, Result};
use crate::splat::{logit, sigmoid, SplatCloud, SplatParams};

/// Per-Gaussian view-space gradient statistics since the last densify step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub views: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            views: vec![0; n],
        }
    }

    pub fn reset(&mut self, n: usize) {
        *self = Self::new(n);
    }

    /// Adds one view's gradient norms for the Gaussians it touched.
    pub fn add_view(&mut self, norms: &[f64], touched: &[bool], scale: f64) {
        for i in 0..norms.len() {
            if touched[i] {
                self.grad_sum[i] += norms[i] * scale;
                self.views[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.views[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.views[i] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DensifyEvent {
    pub before: usize,
    pub cloned: usize,
    /// Parents replaced by `split_factor` children each.
    pub split: usize,
    pub pruned: usize,
    pub after: usize,
}

impl DensifyEvent {
    /// `after` as implied by the counts.
    pub fn expected_after(&self, split_factor: usize) -> usize {
        self.before + self.cloned + self.split * split_factor - self.split - self.pruned
    }
}

/// Clones small high-gradient Gaussians, splits large ones, then prunes
/// transparent (and, once `after_reset`, oversized) Gaussians. Moments of new
/// rows are zero.
pub fn densify_and_prune(
    cloud: &mut SplatCloud,
    optimizer: &mut OptimizerState,
    stats: &DensifyStats,
    config: &TrainConfig,
    extent: f64,
    after_reset: bool,
    rng: &mut impl Rng,
) -> Result<DensifyEvent> {
    let n = cloud.len();
    let mut event = DensifyEvent {
        before: n,
        ..Default::default()
    };
    let split_limit = config.split_scale_threshold * extent;
    let max_scale = |c: &SplatCloud, i: usize| c.scale(i).into_iter().fold(0.0, f64::max);
    let flagged: Vec<usize> = (0..n)
        .filter(|&i| stats.mean(i) > config.densify_grad_threshold)
        .collect();
    let (to_split, to_clone): (Vec<usize>, Vec<usize>) =
        flagged.into_iter().partition(|&i| max_scale(cloud, i) > split_limit);

    let mut extra = SplatParams::zeros(0);
    for &i in &to_clone {
        extra.push_row_from(&cloud.params, i);
    }
    event.cloned = to_clone.len();

    let shrink = config.split_scale_shrink.ln();
    for &i in &to_split {
        let r = quat_to_matrix(cloud.params.rotations[i]);
        let s = cloud.scale(i);
        for _ in 0..config.split_factor {
            let z: [f64; 3] = [0; 3].map(|_| rng.sample(StandardNormal));
            let offset = r * Vector3::new(s[0] * z[0], s[1] * z[1], s[2] * z[2]);
            extra.push_row_from(&cloud.params, i);
            let c = extra.len() - 1;
            for k in 0..3 {
                extra.positions[c][k] += offset[k];
                extra.log_scales[c][k] -= shrink;
            }
        }
    }
    event.split = to_split.len();
    for j in 0..extra.len() {
        cloud.params.push_row_from(&extra, j);
    }
    optimizer.push_zero_rows(cloud.len() - n);

    let scale_limit = config.prune_scale_fraction * extent;
    let mut keep = vec![true; cloud.len()];
    for &i in &to_split {
        keep[i] = false;
    }
    for (i, k) in keep.iter_mut().enumerate() {
        if !*k {
            continue;
        }
        if sigmoid(cloud.params.opacity_logits[i]) < config.prune_opacity_threshold
            || (after_reset && max_scale(cloud, i) > scale_limit)
        {
            *k = false;
            event.pruned += 1;
        }
    }
    if !keep.iter().any(|&k| k) {
        return Err(Error::PrunedToEmpty);
    }
    cloud.params.retain_rows(&keep);
    optimizer.retain_rows(&keep);
    event.after = cloud.len();
    Ok(event)
}

/// Caps every opacity at `value`.
pub fn opacity_reset(cloud: &mut SplatCloud, value: f64) {
    let cap = logit(value);
    for o in cloud.params.opacity_logits.iter_mut() {
        if *o > cap {
            *o = cap;
        }
    }
}
