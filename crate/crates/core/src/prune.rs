//! Floater removal: bounding box, photometric support, opacity and
//! k-nearest-neighbor outlier rules, applied as subset selections.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formats::{SceneBundle, SparsePoints};
use crate::knn::mean_knn_distances;
use crate::render::{render, RenderSettings};
use crate::splat::{sigmoid, SplatCloud};

const KNN_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|k| !(min[k] <= max[k])) {
            return Err(Error::InvalidParameter(format!(
                "box min {:?} exceeds max {:?}",
                min, max
            )));
        }
        Ok(Self { min, max })
    }

    /// Closed-box membership.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PruneRule {
    Bounds,
    Support,
    Opacity,
    Knn,
}

impl PruneRule {
    pub fn name(self) -> &'static str {
        match self {
            PruneRule::Bounds => "bounds",
            PruneRule::Support => "support",
            PruneRule::Opacity => "opacity",
            PruneRule::Knn => "knn",
        }
    }
}

/// One rule's removals, as indices into the cloud the chain started from.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneStep {
    pub rule: PruneRule,
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub before: usize,
    pub after: usize,
    pub steps: Vec<PruneStep>,
}

impl PruneReport {
    pub fn total_removed(&self) -> usize {
        self.steps.iter().map(|s| s.removed.len()).sum()
    }

    /// All removed indices, sorted.
    pub fn removed(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.steps.iter().flat_map(|s| s.removed.iter().copied()).collect();
        all.sort_unstable();
        all
    }
}

impl fmt::Display for PruneReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "before {}", self.before)?;
        for s in &self.steps {
            writeln!(f, "{} removed {}", s.rule.name(), s.removed.len())?;
        }
        write!(f, "after {}", self.after)
    }
}

/// A cloud after pruning plus what was taken out.
#[derive(Debug, Clone)]
pub struct Pruned {
    pub cloud: SplatCloud,
    pub report: PruneReport,
}

fn apply_keep(cloud: &SplatCloud, keep: &[bool], rule: PruneRule) -> Result<Pruned> {
    let survivors: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
    if survivors.is_empty() && !cloud.is_empty() {
        return Err(Error::PrunedToEmpty);
    }
    let removed = (0..cloud.len()).filter(|&i| !keep[i]).collect();
    Ok(Pruned {
        cloud: cloud.select(&survivors),
        report: PruneReport {
            before: cloud.len(),
            after: survivors.len(),
            steps: vec![PruneStep { rule, removed }],
        },
    })
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per axis, the `[percentile, 100 − percentile]` quantile range of the
/// sparse points, widened on both sides by `margin` times its width.
pub fn auto_bounds(points: &SparsePoints, percentile: f64, margin: f64) -> Result<Aabb> {
    if points.is_empty() {
        return Err(Error::EmptyInit);
    }
    if !(0.0..=50.0).contains(&percentile) || !(margin >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bounds percentile {} / margin {} out of range",
            percentile, margin
        )));
    }
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for k in 0..3 {
        let mut axis: Vec<f64> = points.positions.iter().map(|p| p[k]).collect();
        axis.sort_by(f64::total_cmp);
        let lo = quantile(&axis, percentile / 100.0);
        let hi = quantile(&axis, 1.0 - percentile / 100.0);
        let pad = margin * (hi - lo);
        min[k] = lo - pad;
        max[k] = hi + pad;
    }
    Aabb::new(min, max)
}

pub fn prune_by_bounds(cloud: &SplatCloud, aabb: &Aabb) -> Result<Pruned> {
    let keep: Vec<bool> = cloud.params.positions.iter().map(|&p| aabb.contains(p)).collect();
    apply_keep(cloud, &keep, PruneRule::Bounds)
}

/// Max over all views and pixels of each Gaussian's blend weight `α'·T`.
pub fn compute_support(cloud: &SplatCloud, bundle: &SceneBundle, settings: &RenderSettings) -> Vec<f64> {
    let per_view: Vec<Vec<f64>> = (0..bundle.poses.len())
        .into_par_iter()
        .map(|v| render(cloud, &bundle.camera(v), [0.0; 3], settings).per_gaussian_max_blend)
        .collect();
    let mut support = vec![0.0f64; cloud.len()];
    for view in per_view {
        for (s, v) in support.iter_mut().zip(view) {
            *s = s.max(v);
        }
    }
    support
}

pub fn prune_by_support(cloud: &SplatCloud, support: &[f64], threshold: f64) -> Result<Pruned> {
    if support.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "support has {} entries for {} gaussians",
            support.len(),
            cloud.len()
        )));
    }
    let keep: Vec<bool> = support.iter().map(|&s| !(s < threshold)).collect();
    apply_keep(cloud, &keep, PruneRule::Support)
}

pub fn prune_by_opacity(cloud: &SplatCloud, threshold: f64) -> Result<Pruned> {
    let keep: Vec<bool> = cloud.params.opacity_logits.iter().map(|&o| sigmoid(o) >= threshold).collect();
    apply_keep(cloud, &keep, PruneRule::Opacity)
}

/// Removes Gaussians whose mean distance to their `k` nearest neighbors
/// exceeds the cloud-wide mean of that statistic by more than `m` standard
/// deviations.
pub fn prune_by_knn(cloud: &SplatCloud, k: usize, m: f64) -> Result<Pruned> {
    if cloud.len() <= k || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "knn pruning needs more than k = {} gaussians, have {}",
            k,
            cloud.len()
        )));
    }
    let d: Vec<f64> = mean_knn_distances(&cloud.params.positions, k)
        .into_iter()
        .map(|v| v.expect("cloud larger than k"))
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt().max(KNN_SIGMA_FLOOR);
    let cut = mean + m * sigma;
    let keep: Vec<bool> = d.iter().map(|&v| !(v > cut)).collect();
    apply_keep(cloud, &keep, PruneRule::Knn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundsRule {
    /// Box from the sparse points of the bundle.
    Auto { percentile: f64, margin: f64 },
    Fixed(Aabb),
}

/// Which rules run, in the fixed order bounds, support, opacity, kNN.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    pub bounds: Option<BoundsRule>,
    pub support_threshold: Option<f64>,
    pub opacity_threshold: Option<f64>,
    /// `(k, m)`.
    pub knn: Option<(usize, f64)>,
    pub settings: RenderSettings,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            bounds: Some(BoundsRule::Auto {
                percentile: 1.0,
                margin: 0.25,
            }),
            support_threshold: Some(1e-3),
            opacity_threshold: Some(0.005),
            knn: Some((8, 3.0)),
            settings: RenderSettings::default(),
        }
    }
}

/// Runs the enabled rules in order. Step indices refer to `cloud`.
pub fn prune_chain(cloud: &SplatCloud, bundle: &SceneBundle, config: &PruneConfig) -> Result<Pruned> {
    let mut current = cloud.clone();
    // original index of each row of `current`
    let mut origin: Vec<usize> = (0..cloud.len()).collect();
    let mut steps = Vec::new();
    let mut absorb = |pruned: Pruned, current: &mut SplatCloud, origin: &mut Vec<usize>| {
        let mut step = pruned.report.steps.into_iter().next().expect("one step per rule");
        let removed: Vec<usize> = step.removed.iter().map(|&i| origin[i]).collect();
        let mut gone = vec![false; origin.len()];
        for &i in &step.removed {
            gone[i] = true;
        }
        let mut j = 0;
        origin.retain(|_| {
            j += 1;
            !gone[j - 1]
        });
        step.removed = removed;
        steps.push(step);
        *current = pruned.cloud;
    };

    if let Some(rule) = &config.bounds {
        let aabb = match rule {
            BoundsRule::Auto { percentile, margin } => auto_bounds(&bundle.points, *percentile, *margin)?,
            BoundsRule::Fixed(b) => *b,
        };
        let p = prune_by_bounds(&current, &aabb)?;
        absorb(p, &mut current, &mut origin);
    }
    if let Some(t) = config.support_threshold {
        let support = compute_support(&current, bundle, &config.settings);
        let p = prune_by_support(&current, &support, t)?;
        absorb(p, &mut current, &mut origin);
    }
    if let Some(t) = config.opacity_threshold {
        let p = prune_by_opacity(&current, t)?;
        absorb(p, &mut current, &mut origin);
    }
    if let Some((k, m)) = config.knn {
        let p = prune_by_knn(&current, k, m)?;
        absorb(p, &mut current, &mut origin);
    }
    let after = current.len();
    Ok(Pruned {
        cloud: current,
        report: PruneReport {
            before: cloud.len(),
            after,
            steps,
        },
    })
}
