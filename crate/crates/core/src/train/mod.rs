//! The optimization loop: Adam per parameter group, scheduled position rate,
//! adaptive density control, opacity resets and SH degree promotion.

mod adam;
mod config;
mod density;

pub use adam::{adam_step, lr_schedule, OptimizerState};
pub use config::TrainConfig;
pub use density::{densify_and_prune, opacity_reset, DensifyEvent, DensifyStats};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backprop::backward;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::formats::SceneBundle;
use crate::image::ImageBuffer;
use crate::metrics::{photometric_loss, LossBreakdown};
use crate::render::render;
use crate::splat::{ParamGroup, SplatCloud};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub view: String,
    pub loss: LossBreakdown,
    pub num_gaussians: usize,
    pub sh_degree: usize,
    pub densify: Option<DensifyEvent>,
    pub opacity_reset: bool,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} view={} loss={:.6} l1={:.6} dssim={:.6} gaussians={} sh_degree={}",
            self.iteration,
            self.view,
            self.loss.total,
            self.loss.l1,
            self.loss.dssim,
            self.num_gaussians,
            self.sh_degree
        )?;
        if let Some(e) = &self.densify {
            write!(f, " cloned={} split={} pruned={}", e.cloned, e.split, e.pruned)?;
        }
        if self.opacity_reset {
            write!(f, " opacity_reset")?;
        }
        Ok(())
    }
}

/// Hooks called from inside [`train_with`]. Both default to doing nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_interval` iterations.
    fn on_checkpoint(&mut self, _iteration: usize, _cloud: &SplatCloud) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub cloud: SplatCloud,
    pub log: Vec<StepRecord>,
    /// Scene radius used for rate and threshold scaling.
    pub extent: f64,
}

struct View {
    name: String,
    camera: Camera,
    image: ImageBuffer,
}

fn training_views(bundle: &SceneBundle, downscale: usize) -> Result<Vec<View>> {
    let views: Vec<View> = (0..bundle.poses.len())
        .filter_map(|v| {
            bundle.image(v).map(|img| View {
                name: bundle.poses[v].image_name.clone(),
                camera: bundle.camera(v).downscaled(downscale),
                image: img.downscale(downscale),
            })
        })
        .collect();
    if views.len() < 2 {
        return Err(Error::InsufficientViews(views.len()));
    }
    Ok(views)
}

pub fn train(bundle: &SceneBundle, init: SplatCloud, config: &TrainConfig) -> Result<TrainResult> {
    train_with(bundle, init, config, &mut ())
}

pub fn train_with(
    bundle: &SceneBundle,
    init: SplatCloud,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainResult> {
    config.validate()?;
    init.validate()?;
    let views = training_views(bundle, config.downscale)?;
    let extent = bundle.extent().radius;
    let mut cloud = init;
    let mut log = Vec::with_capacity(config.iterations);
    if config.iterations == 0 {
        return Ok(TrainResult { cloud, log, extent });
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInit);
    }
    cloud.active_sh_degree = cloud.active_sh_degree.min(config.max_sh_degree);

    let mut view_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    split_rng.set_stream(1);
    let mut order: Vec<usize> = Vec::new();

    let mut optimizer = OptimizerState::new(cloud.len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut stats = DensifyStats::new(cloud.len());
    let mut reset_happened = false;
    let densify_end = config.densify_end();

    for iteration in 1..=config.iterations {
        if config.sh_promote_interval > 0
            && iteration % config.sh_promote_interval == 0
            && cloud.active_sh_degree < config.max_sh_degree
        {
            cloud.active_sh_degree += 1;
        }
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut view_rng);
            order.reverse();
        }
        let view = &views[order.pop().expect("refilled above")];

        let out = render(&cloud, &view.camera, config.background, &config.render);
        let (loss, dl) = photometric_loss(&out.color, &view.image, config.lambda)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                view: view.name.clone(),
            });
        }
        let grads = backward(&cloud, &view.camera, &out, &dl)?;

        if iteration <= densify_end {
            // pixel units to normalized device units
            let ndc = 0.5 * view.camera.width.max(view.camera.height) as f64;
            stats.add_view(&grads.view_space_grad_norm, &out.touched, ndc);
        }

        let lr_position = extent
            * lr_schedule(
                iteration,
                config.lr_position_initial,
                config.lr_position_final,
                config.position_lr_max_steps,
            );
        optimizer.update(&mut cloud.params, &grads.params, |g| match g {
            ParamGroup::Position => lr_position,
            ParamGroup::Scale => config.lr_scale,
            ParamGroup::Rotation => config.lr_rotation,
            ParamGroup::Opacity => config.lr_opacity,
            ParamGroup::ShDc => config.lr_sh_dc,
            ParamGroup::ShRest => config.lr_sh_rest,
        })?;

        let mut densify = None;
        if iteration > config.densify_start_iter
            && iteration <= densify_end
            && iteration % config.densify_interval == 0
        {
            let event = densify_and_prune(
                &mut cloud,
                &mut optimizer,
                &stats,
                config,
                extent,
                reset_happened,
                &mut split_rng,
            )?;
            stats.reset(cloud.len());
            densify = Some(event);
        }
        let mut did_reset = false;
        if config.opacity_reset_interval > 0
            && iteration % config.opacity_reset_interval == 0
            && iteration <= densify_end
        {
            opacity_reset(&mut cloud, config.opacity_reset_value);
            reset_happened = true;
            did_reset = true;
        }

        let record = StepRecord {
            iteration,
            view: view.name.clone(),
            loss,
            num_gaussians: cloud.len(),
            sh_degree: cloud.active_sh_degree,
            densify,
            opacity_reset: did_reset,
        };
        log::debug!("{}", record);
        observer.on_step(&record)?;
        log.push(record);
        if config.checkpoint_interval > 0 && iteration % config.checkpoint_interval == 0 {
            observer.on_checkpoint(iteration, &cloud)?;
        }
    }
    Ok(TrainResult { cloud, log, extent })
}
