//! The optimizable scene: per-Gaussian position, log-scale, rotation,
//! opacity logit and spherical-harmonics color.

mod covariance;
mod init;
pub(crate) mod sh;

pub use covariance::{build_covariance, covariance_from_normalized};
pub use init::{init_from_sparse, InitConfig};
pub use sh::{eval_sh_color, sh_basis, sh_basis_with_grad, SH_C0};

use crate::error::{Error, Result};

/// Coefficients per channel for SH degree 3.
pub const SH_COEFFS: usize = 16;
/// Degree ≥ 1 coefficients across all three channels.
pub const SH_REST: usize = 3 * (SH_COEFFS - 1);
pub const MAX_SH_DEGREE: usize = 3;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// The named parameter groups the optimizer updates with separate rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Scale,
    Rotation,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Position,
        ParamGroup::Scale,
        ParamGroup::Rotation,
        ParamGroup::Opacity,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
    ];

    /// Scalars per Gaussian.
    pub fn width(self) -> usize {
        match self {
            ParamGroup::Position | ParamGroup::Scale | ParamGroup::ShDc => 3,
            ParamGroup::Rotation => 4,
            ParamGroup::Opacity => 1,
            ParamGroup::ShRest => SH_REST,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Scale => "scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity",
            ParamGroup::ShDc => "sh_dc",
            ParamGroup::ShRest => "sh_rest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupDescriptor {
    pub group: ParamGroup,
    /// Offset of this group's first scalar in the concatenation of all groups.
    pub offset: usize,
    pub len: usize,
}

/// Struct-of-arrays storage shared by the cloud, its gradients and the
/// optimizer moments, so row edits (densify, prune) apply uniformly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatParams {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    /// (w, x, y, z), unnormalized.
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub sh_dc: Vec<[f64; 3]>,
    /// Channel-major: index `ch * 15 + (k - 1)` for coefficient `k ≥ 1`.
    pub sh_rest: Vec<[f64; SH_REST]>,
}

impl SplatParams {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            sh_dc: vec![[0.0; 3]; n],
            sh_rest: vec![[0.0; SH_REST]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.log_scales.len(),
            self.rotations.len(),
            self.opacity_logits.len(),
            self.sh_dc.len(),
            self.sh_rest.len(),
        ];
        if lens.iter().all(|&l| l == n) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "parameter arrays disagree in length: {} vs {:?}",
                n, lens
            )))
        }
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        match group {
            ParamGroup::Position => self.positions.as_flattened(),
            ParamGroup::Scale => self.log_scales.as_flattened(),
            ParamGroup::Rotation => self.rotations.as_flattened(),
            ParamGroup::Opacity => &self.opacity_logits,
            ParamGroup::ShDc => self.sh_dc.as_flattened(),
            ParamGroup::ShRest => self.sh_rest.as_flattened(),
        }
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        match group {
            ParamGroup::Position => self.positions.as_flattened_mut(),
            ParamGroup::Scale => self.log_scales.as_flattened_mut(),
            ParamGroup::Rotation => self.rotations.as_flattened_mut(),
            ParamGroup::Opacity => &mut self.opacity_logits,
            ParamGroup::ShDc => self.sh_dc.as_flattened_mut(),
            ParamGroup::ShRest => self.sh_rest.as_flattened_mut(),
        }
    }

    /// Groups in canonical order; they partition all parameters exactly once.
    pub fn parameters_view(&self) -> Vec<GroupDescriptor> {
        let mut offset = 0;
        ParamGroup::ALL
            .iter()
            .map(|&group| {
                let len = self.group(group).len();
                let d = GroupDescriptor { group, offset, len };
                offset += len;
                d
            })
            .collect()
    }

    pub fn total_params(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.group(g).len()).sum()
    }

    pub fn push_row_from(&mut self, other: &SplatParams, i: usize) {
        self.positions.push(other.positions[i]);
        self.log_scales.push(other.log_scales[i]);
        self.rotations.push(other.rotations[i]);
        self.opacity_logits.push(other.opacity_logits[i]);
        self.sh_dc.push(other.sh_dc[i]);
        self.sh_rest.push(other.sh_rest[i]);
    }

    pub fn push_zero_rows(&mut self, count: usize) {
        let n = self.len() + count;
        self.positions.resize(n, [0.0; 3]);
        self.log_scales.resize(n, [0.0; 3]);
        self.rotations.resize(n, [0.0; 4]);
        self.opacity_logits.resize(n, 0.0);
        self.sh_dc.resize(n, [0.0; 3]);
        self.sh_rest.resize(n, [0.0; SH_REST]);
    }

    /// Keeps rows where `keep[i]` is true, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        fn retain<T>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        assert_eq!(keep.len(), self.len());
        retain(&mut self.positions, keep);
        retain(&mut self.log_scales, keep);
        retain(&mut self.rotations, keep);
        retain(&mut self.opacity_logits, keep);
        retain(&mut self.sh_dc, keep);
        retain(&mut self.sh_rest, keep);
    }

    pub fn all_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|v| v.is_finite()))
    }
}

/// A set of 3D Gaussians plus the SH degree currently in use.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatCloud {
    pub params: SplatParams,
    pub active_sh_degree: usize,
}

impl SplatCloud {
    pub fn new(params: SplatParams, active_sh_degree: usize) -> Self {
        Self {
            params,
            active_sh_degree,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.params.opacity_logits[i])
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.params.log_scales[i].map(f64::exp)
    }

    /// Full coefficient table `[channel][k]` for Gaussian `i`.
    pub fn sh_coeffs(&self, i: usize) -> [[f64; SH_COEFFS]; 3] {
        let mut out = [[0.0; SH_COEFFS]; 3];
        let rest = &self.params.sh_rest[i];
        for (ch, row) in out.iter_mut().enumerate() {
            row[0] = self.params.sh_dc[i][ch];
            row[1..].copy_from_slice(&rest[ch * 15..(ch + 1) * 15]);
        }
        out
    }

    pub fn set_sh_coeffs(&mut self, i: usize, coeffs: &[[f64; SH_COEFFS]; 3]) {
        for (ch, row) in coeffs.iter().enumerate() {
            self.params.sh_dc[i][ch] = row[0];
            self.params.sh_rest[i][ch * 15..(ch + 1) * 15].copy_from_slice(&row[1..]);
        }
    }

    /// Checks the array-length, finiteness, rotation and SH-degree invariants.
    pub fn validate(&self) -> Result<()> {
        self.params.check_shapes()?;
        if !self.params.all_finite() {
            return Err(Error::InvalidParameter("non-finite splat parameter".into()));
        }
        if self.active_sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "active SH degree {} exceeds {}",
                self.active_sh_degree, MAX_SH_DEGREE
            )));
        }
        if let Some(i) = self
            .params
            .rotations
            .iter()
            .position(|q| q.iter().all(|&v| v == 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "gaussian {} has a zero quaternion",
                i
            )));
        }
        Ok(())
    }

    /// Gaussians selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> SplatCloud {
        let mut params = SplatParams::default();
        for &i in indices {
            params.push_row_from(&self.params, i);
        }
        SplatCloud::new(params, self.active_sh_degree)
    }

    pub fn append(&mut self, other: &SplatCloud) {
        for i in 0..other.len() {
            self.params.push_row_from(&other.params, i);
        }
    }
}
