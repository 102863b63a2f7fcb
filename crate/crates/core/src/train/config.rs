use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::render::RenderSettings;

/// Every knob of a training run. Serialized as `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Position rates are multiplied by the scene extent.
    pub lr_position_initial: f64,
    pub lr_position_final: f64,
    pub position_lr_max_steps: usize,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_sh_dc: f64,
    pub lr_sh_rest: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda: f64,
    pub densify_start_iter: usize,
    /// `None` means half of `iterations`.
    pub densify_end_iter: Option<usize>,
    pub densify_interval: usize,
    /// Compared against the mean view-space gradient in normalized device
    /// units (pixel gradient times half the image size).
    pub densify_grad_threshold: f64,
    /// Fraction of the scene extent above which a flagged Gaussian splits.
    pub split_scale_threshold: f64,
    pub split_factor: usize,
    pub split_scale_shrink: f64,
    pub prune_opacity_threshold: f64,
    /// Fraction of the scene extent; applies only after an opacity reset.
    pub prune_scale_fraction: f64,
    pub opacity_reset_interval: usize,
    pub opacity_reset_value: f64,
    pub sh_promote_interval: usize,
    pub max_sh_degree: usize,
    pub background: [f64; 3],
    pub downscale: usize,
    pub seed: u64,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_interval: usize,
    pub render: RenderSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 7000,
            lr_position_initial: 1.6e-4,
            lr_position_final: 1.6e-6,
            position_lr_max_steps: 30_000,
            lr_opacity: 0.05,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_sh_dc: 2.5e-3,
            lr_sh_rest: 2.5e-3 / 20.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-15,
            lambda: 0.2,
            densify_start_iter: 500,
            densify_end_iter: None,
            densify_interval: 100,
            densify_grad_threshold: 2e-4,
            split_scale_threshold: 0.01,
            split_factor: 2,
            split_scale_shrink: 1.6,
            prune_opacity_threshold: 0.005,
            prune_scale_fraction: 0.1,
            opacity_reset_interval: 3000,
            opacity_reset_value: 0.01,
            sh_promote_interval: 1000,
            max_sh_degree: 3,
            background: [0.0; 3],
            downscale: 1,
            seed: 0,
            checkpoint_interval: 0,
            render: RenderSettings::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {}: {:?}", key, value)))
}

impl TrainConfig {
    pub fn densify_end(&self) -> usize {
        self.densify_end_iter.unwrap_or(self.iterations / 2)
    }

    /// `(key, value)` pairs in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.render;
        let bg = self.background;
        vec![
            ("iterations", self.iterations.to_string()),
            ("lr_position_initial", self.lr_position_initial.to_string()),
            ("lr_position_final", self.lr_position_final.to_string()),
            ("position_lr_max_steps", self.position_lr_max_steps.to_string()),
            ("lr_opacity", self.lr_opacity.to_string()),
            ("lr_scale", self.lr_scale.to_string()),
            ("lr_rotation", self.lr_rotation.to_string()),
            ("lr_sh_dc", self.lr_sh_dc.to_string()),
            ("lr_sh_rest", self.lr_sh_rest.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("lambda", self.lambda.to_string()),
            ("densify_start_iter", self.densify_start_iter.to_string()),
            (
                "densify_end_iter",
                self.densify_end_iter.map_or("auto".to_string(), |v| v.to_string()),
            ),
            ("densify_interval", self.densify_interval.to_string()),
            ("densify_grad_threshold", self.densify_grad_threshold.to_string()),
            ("split_scale_threshold", self.split_scale_threshold.to_string()),
            ("split_factor", self.split_factor.to_string()),
            ("split_scale_shrink", self.split_scale_shrink.to_string()),
            ("prune_opacity_threshold", self.prune_opacity_threshold.to_string()),
            ("prune_scale_fraction", self.prune_scale_fraction.to_string()),
            ("opacity_reset_interval", self.opacity_reset_interval.to_string()),
            ("opacity_reset_value", self.opacity_reset_value.to_string()),
            ("sh_promote_interval", self.sh_promote_interval.to_string()),
            ("max_sh_degree", self.max_sh_degree.to_string()),
            ("background", format!("{},{},{}", bg[0], bg[1], bg[2])),
            ("downscale", self.downscale.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("near", r.near.to_string()),
            ("dilation", r.dilation.to_string()),
            ("alpha_max", r.alpha_max.to_string()),
            ("alpha_min", r.alpha_min.to_string()),
            ("t_min", r.t_min.to_string()),
            ("cull_sigma", r.cull_sigma.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "iterations" => self.iterations = parse(key, value)?,
            "lr_position_initial" => self.lr_position_initial = parse(key, value)?,
            "lr_position_final" => self.lr_position_final = parse(key, value)?,
            "position_lr_max_steps" => self.position_lr_max_steps = parse(key, value)?,
            "lr_opacity" => self.lr_opacity = parse(key, value)?,
            "lr_scale" => self.lr_scale = parse(key, value)?,
            "lr_rotation" => self.lr_rotation = parse(key, value)?,
            "lr_sh_dc" => self.lr_sh_dc = parse(key, value)?,
            "lr_sh_rest" => self.lr_sh_rest = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "densify_start_iter" => self.densify_start_iter = parse(key, value)?,
            "densify_end_iter" => {
                self.densify_end_iter = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "densify_interval" => self.densify_interval = parse(key, value)?,
            "densify_grad_threshold" => self.densify_grad_threshold = parse(key, value)?,
            "split_scale_threshold" => self.split_scale_threshold = parse(key, value)?,
            "split_factor" => self.split_factor = parse(key, value)?,
            "split_scale_shrink" => self.split_scale_shrink = parse(key, value)?,
            "prune_opacity_threshold" => self.prune_opacity_threshold = parse(key, value)?,
            "prune_scale_fraction" => self.prune_scale_fraction = parse(key, value)?,
            "opacity_reset_interval" => self.opacity_reset_interval = parse(key, value)?,
            "opacity_reset_value" => self.opacity_reset_value = parse(key, value)?,
            "sh_promote_interval" => self.sh_promote_interval = parse(key, value)?,
            "max_sh_degree" => self.max_sh_degree = parse(key, value)?,
            "background" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!("background needs r,g,b: {:?}", value)));
                }
                for (k, p) in parts.iter().enumerate() {
                    self.background[k] = parse(key, p)?;
                }
            }
            "downscale" => self.downscale = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse(key, value)?,
            "near" => self.render.near = parse(key, value)?,
            "dilation" => self.render.dilation = parse(key, value)?,
            "alpha_max" => self.render.alpha_max = parse(key, value)?,
            "alpha_min" => self.render.alpha_min = parse(key, value)?,
            "t_min" => self.render.t_min = parse(key, value)?,
            "cull_sigma" => self.render.cull_sigma = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key: {}", key))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{} = {}", k, v);
        }
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let rates = [
            ("lr_position_initial", self.lr_position_initial),
            ("lr_position_final", self.lr_position_final),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_sh_dc", self.lr_sh_dc),
            ("lr_sh_rest", self.lr_sh_rest),
            ("densify_grad_threshold", self.densify_grad_threshold),
            ("split_scale_threshold", self.split_scale_threshold),
            ("prune_opacity_threshold", self.prune_opacity_threshold),
            ("prune_scale_fraction", self.prune_scale_fraction),
            ("split_scale_shrink", self.split_scale_shrink),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{} must be positive, got {}", name, v));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.opacity_reset_value > 0.0 && self.opacity_reset_value < 1.0) {
            return bad(format!("opacity_reset_value must lie in (0, 1), got {}", self.opacity_reset_value));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.max_sh_degree > crate::splat::MAX_SH_DEGREE {
            return bad(format!("max_sh_degree must be at most 3, got {}", self.max_sh_degree));
        }
        if self.densify_interval == 0 || self.split_factor == 0 || self.downscale == 0 {
            return bad("densify_interval, split_factor and downscale must be at least 1".into());
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!("background must lie in [0, 1], got {:?}", self.background));
        }
        Ok(())
    }
}
