//! The `twister` command line: ingest, train, prune, render, synth, eval and
//! info, each a thin wrapper over `twister-core`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use twister_core::camera::{CameraIntrinsics, CameraPose};
use twister_core::formats::{diagnose_registration, read_splat_ply, write_image, write_splat_ply};
use twister_core::io::write_atomic;
use twister_core::prune::{prune_chain, Aabb, BoundsRule, PruneConfig};
use twister_core::render::render;
use twister_core::splat::{init_from_sparse, sigmoid, InitConfig};
use twister_core::synth::{
    evaluate, load_dataset, make_dataset, reference_settings, Dataset, EvalTable, RigSpec, SfmSpec, VortexSpec,
};
use twister_core::train::{train_with, StepRecord, TrainConfig, TrainObserver};
use twister_core::{Camera, SplatCloud};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const CHECKPOINT_FILE: &str = "checkpoint.ply";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const INIT_FILE: &str = "init.ply";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<twister_core::Error> for CliError {
    fn from(e: twister_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "twister", version, about = "Gaussian splatting for sparse camera rigs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for training and synthetic generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Print the effective training configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, as `key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse a COLMAP export, report registration problems, write the initial cloud.
    Ingest(IngestArgs),
    /// Optimize a cloud against a dataset.
    Train(TrainArgs),
    /// Remove floaters.
    Prune(PruneArgs),
    /// Render a cloud from dataset poses or an orbit.
    Render(RenderArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Score a cloud on dataset views.
    Eval(EvalArgs),
    /// Print statistics of a splat PLY.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    pub colmap_dir: PathBuf,
    /// Cameras in the rig; defaults to the dataset's rigspec.
    #[arg(long)]
    pub expected_cameras: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this cloud instead of the sparse points.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Comma-separated image names to hold out; defaults to the rigspec.
    #[arg(long, value_delimiter = ',')]
    pub held_out: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset for the bounds and support rules.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `auto`, `off`, or `minx,miny,minz,maxx,maxy,maxz`.
    #[arg(long, default_value = "auto")]
    pub bounds: String,
    #[arg(long, default_value_t = 1.0)]
    pub bounds_percentile: f64,
    #[arg(long, default_value_t = 0.25)]
    pub bounds_margin: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub support_threshold: f64,
    #[arg(long)]
    pub no_support: bool,
    #[arg(long, default_value_t = 0.005)]
    pub opacity_threshold: f64,
    #[arg(long)]
    pub no_opacity: bool,
    #[arg(long, default_value_t = 8)]
    pub knn_k: usize,
    #[arg(long, default_value_t = 3.0)]
    pub knn_m: f64,
    #[arg(long)]
    pub no_knn: bool,
    /// Where to write the report; defaults to `<out>.report`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Render the poses of this dataset.
    #[arg(long, conflicts_with = "orbit")]
    pub dataset: Option<PathBuf>,
    /// Restrict dataset rendering to these image names.
    #[arg(long, value_delimiter = ',')]
    pub views: Vec<String>,
    /// Render this many poses on a ring around the cloud centroid.
    #[arg(long)]
    pub orbit: Option<usize>,
    #[arg(long)]
    pub orbit_radius: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub orbit_elevation: f64,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 160.0)]
    pub focal: f64,
    /// Image file extension: ppm or png.
    #[arg(long, default_value = "ppm")]
    pub format: String,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vortex_gaussians: Option<usize>,
    #[arg(long)]
    pub floor_gaussians: Option<usize>,
    #[arg(long)]
    pub swirl: Option<f64>,
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long)]
    pub ring_radius: Option<f64>,
    /// Square image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub sfm_subsample: Option<f64>,
    #[arg(long)]
    pub sfm_noise: Option<f64>,
    #[arg(long)]
    pub sfm_seed: Option<u64>,
    /// `r,g,b` in [0, 1].
    #[arg(long)]
    pub background: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub input: PathBuf,
    pub dataset: PathBuf,
    /// Image names or view indices; defaults to the held-out views.
    #[arg(long, value_delimiter = ',')]
    pub views: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InfoArgs {
    pub input: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("usage error: {}", m),
                CliError::Runtime(err) => eprintln!("error: {:#}", err),
            }
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let config = train_config(&cli.global)?;
    if cli.global.print_config {
        print!("{}", config.to_text());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return usage("no subcommand given (try --help)");
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| anyhow!("thread pool: {}", e))?;
    pool.install(|| match command {
        Command::Ingest(a) => cmd_ingest(a).map(|s| print!("{}", s)),
        Command::Train(a) => cmd_train(a, &config).map(|s| print!("{}", s)),
        Command::Prune(a) => cmd_prune(a, &config).map(|s| print!("{}", s)),
        Command::Render(a) => cmd_render(a, &config).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
        Command::Synth(a) => cmd_synth(a, cli.global.seed).map(|s| print!("{}", s)),
        Command::Eval(a) => cmd_eval(a, &config).map(|t| print!("{}", t)),
        Command::Info(a) => cmd_info(a).map(|s| print!("{}", s)),
    })
}

/// Defaults, then `--config`, then `--set`, then `--seed`.
pub fn train_config(global: &GlobalArgs) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = &global.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    for kv in &global.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            return usage(format!("--set expects key=value, got {:?}", kv));
        };
        config.set(k.trim(), v.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn expected_cameras(dataset: &Dataset, flag: Option<usize>) -> usize {
    flag.or(dataset.info.as_ref().map(|i| i.expected_cameras))
        .unwrap_or(dataset.train.poses.len())
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<String> {
    let dataset = load_dataset(&args.colmap_dir)?;
    let expected = expected_cameras(&dataset, args.expected_cameras);
    let bundle = &dataset.train;
    let mut warnings: Vec<String> = bundle.warnings.iter().map(|w| w.to_string()).collect();
    warnings.extend(diagnose_registration(bundle, expected).iter().map(|w| w.to_string()));
    for w in &warnings {
        log::warn!("{}", w);
    }
    let extent = bundle.extent();
    let init = init_from_sparse(&bundle.points, &InitConfig::new(extent.radius))?;

    create_dir(&args.out)?;
    write_splat_ply(&init, &args.out.join(INIT_FILE))?;
    let mut s = String::new();
    let _ = writeln!(s, "views: {}", bundle.poses.len());
    let _ = writeln!(s, "expected_cameras: {}", expected);
    let _ = writeln!(s, "held_out: {}", dataset.held_out.poses.len());
    let _ = writeln!(s, "points: {}", bundle.points.len());
    let c = extent.center;
    let _ = writeln!(s, "extent: {:.6} (center {:.6} {:.6} {:.6})", extent.radius, c.x, c.y, c.z);
    let _ = writeln!(s, "warnings: {}", warnings.len());
    for w in &warnings {
        let _ = writeln!(s, "warning: {}", w);
    }
    write_atomic(&args.out.join(SUMMARY_FILE), s.as_bytes())?;
    Ok(s)
}

struct CheckpointWriter<'a> {
    out: &'a Path,
    config_hash: String,
    seed: u64,
    extent: f64,
    lines: Vec<String>,
}

impl CheckpointWriter<'_> {
    fn meta(&self, iteration: usize, cloud: &SplatCloud) -> String {
        format!(
            "iteration = {}\nconfig_hash = {}\nseed = {}\nextent = {}\ngaussians = {}\nsh_degree = {}\n",
            iteration,
            self.config_hash,
            self.seed,
            self.extent,
            cloud.len(),
            cloud.active_sh_degree
        )
    }

    fn write(&self, name: &str, iteration: usize, cloud: &SplatCloud) -> twister_core::Result<()> {
        let path = self.out.join(name);
        write_splat_ply(cloud, &path)?;
        write_atomic(&meta_path(&path), self.meta(iteration, cloud).as_bytes())?;
        write_atomic(&self.out.join(TRAIN_LOG_FILE), self.log_text().as_bytes())
    }

    fn log_text(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

impl TrainObserver for CheckpointWriter<'_> {
    fn on_step(&mut self, record: &StepRecord) -> twister_core::Result<()> {
        if record.iteration % 100 == 0 || record.densify.is_some() {
            log::info!("{}", record);
        }
        self.lines.push(record.to_string());
        Ok(())
    }

    fn on_checkpoint(&mut self, iteration: usize, cloud: &SplatCloud) -> twister_core::Result<()> {
        self.write(&format!("checkpoint_{:06}.ply", iteration), iteration, cloud)
    }
}

/// Sidecar holding iteration, config hash, seed and extent for a checkpoint.
pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn eval_lines(stage: usize, table: &EvalTable) -> String {
    let mut s = String::new();
    for r in &table.rows {
        let _ = writeln!(s, "iteration={} view={} psnr={:.4} ssim={:.6}", stage, r.view, r.psnr, r.ssim);
    }
    if let (Some(p), Some(q)) = (table.mean_psnr(), table.mean_ssim()) {
        let _ = writeln!(s, "iteration={} mean psnr={:.4} ssim={:.6}", stage, p, q);
    }
    s
}

pub fn cmd_train(args: &TrainArgs, config: &TrainConfig) -> CliResult<String> {
    let mut config = config.clone();
    if let Some(n) = args.iterations {
        config.iterations = n;
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut dataset = load_dataset(&args.dataset)?;
    if let Some(names) = &args.held_out {
        let all = twister_core::formats::parse_colmap_dir(&args.dataset)?;
        for n in names {
            if all.view_index(n).is_none() {
                return usage(format!("unknown held-out view {:?}", n));
            }
        }
        let (train, held_out) = all.split_views(names);
        dataset.train = train;
        dataset.held_out = held_out;
    }
    let extent = dataset.train.extent().radius;
    let init = match &args.init {
        Some(p) => read_splat_ply(p)?,
        None => init_from_sparse(&dataset.train.points, &InitConfig::new(extent))?,
    };

    create_dir(&args.out)?;
    write_atomic(&args.out.join(CONFIG_FILE), config.to_text().as_bytes())?;
    let settings = reference_settings();
    let bg = config.background;
    let mut metrics = eval_lines(0, &evaluate(&init, &dataset.held_out, bg, &settings)?);

    let mut writer = CheckpointWriter {
        out: &args.out,
        config_hash: config.hash(),
        seed: config.seed,
        extent,
        lines: Vec::new(),
    };
    let result = train_with(&dataset.train, init, &config, &mut writer)?;
    writer.write(CHECKPOINT_FILE, config.iterations, &result.cloud)?;

    let table = evaluate(&result.cloud, &dataset.held_out, bg, &settings)?;
    metrics.push_str(&eval_lines(config.iterations, &table));
    write_atomic(&args.out.join(METRICS_FILE), metrics.as_bytes())?;

    let mut s = format!(
        "trained {} iterations on {} views: {} gaussians\n",
        config.iterations,
        dataset.train.poses.len(),
        result.cloud.len()
    );
    s.push_str(&metrics);
    Ok(s)
}

fn parse_floats(text: &str, n: usize, what: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{} expects {} comma-separated numbers, got {:?}", what, n, text)))?;
    if v.len() != n {
        return usage(format!("{} expects {} comma-separated numbers, got {:?}", what, n, text));
    }
    Ok(v)
}

pub fn prune_config(args: &PruneArgs, config: &TrainConfig) -> CliResult<PruneConfig> {
    let bounds = match args.bounds.as_str() {
        "off" => None,
        "auto" => Some(BoundsRule::Auto {
            percentile: args.bounds_percentile,
            margin: args.bounds_margin,
        }),
        text => {
            let v = parse_floats(text, 6, "--bounds")?;
            let aabb = Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Some(BoundsRule::Fixed(aabb))
        }
    };
    Ok(PruneConfig {
        bounds,
        support_threshold: (!args.no_support).then_some(args.support_threshold),
        opacity_threshold: (!args.no_opacity).then_some(args.opacity_threshold),
        knn: (!args.no_knn).then_some((args.knn_k, args.knn_m)),
        settings: config.render,
    })
}

pub fn cmd_prune(args: &PruneArgs, config: &TrainConfig) -> CliResult<String> {
    let rules = prune_config(args, config)?;
    let needs_dataset =
        rules.support_threshold.is_some() || matches!(rules.bounds, Some(BoundsRule::Auto { .. }));
    if needs_dataset && args.dataset.is_none() {
        return usage("the support rule and automatic bounds need --dataset (or --no-support / --bounds off)");
    }
    let cloud = read_splat_ply(&args.input)?;
    let bundle = match &args.dataset {
        Some(dir) => load_dataset(dir)?.train,
        None => Default::default(),
    };
    let pruned = prune_chain(&cloud, &bundle, &rules)?;
    write_splat_ply(&pruned.cloud, &args.out)?;
    let mut report = pruned.report.to_string();
    if !report.ends_with('\n') {
        report.push('\n');
    }
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_owned();
        s.push(".report");
        PathBuf::from(s)
    });
    write_atomic(&report_path, report.as_bytes())?;
    Ok(report)
}

/// `n` cameras on a horizontal ring around the centroid of `cloud`.
pub fn orbit_cameras(cloud: &SplatCloud, args: &RenderArgs, n: usize) -> Vec<Camera> {
    let count = cloud.len().max(1) as f64;
    let mut center = Vector3::zeros();
    for p in &cloud.params.positions {
        center += Vector3::from(*p);
    }
    center /= count;
    let rms = (cloud
        .params
        .positions
        .iter()
        .map(|p| (Vector3::from(*p) - center).norm_squared())
        .sum::<f64>()
        / count)
        .sqrt();
    let radius = args.orbit_radius.unwrap_or(if rms > 0.0 { 4.0 * rms } else { 3.0 });
    let intr = CameraIntrinsics::pinhole(1, args.width, args.height, args.focal);
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            let eye = center + Vector3::new(radius * a.cos(), radius * a.sin(), args.orbit_elevation * radius);
            let pose = CameraPose::look_at(i as u32 + 1, 1, format!("orbit_{:03}", i), eye, center, Vector3::z());
            Camera::new(&intr, &pose)
        })
        .collect()
}

pub fn cmd_render(args: &RenderArgs, config: &TrainConfig) -> CliResult<Vec<PathBuf>> {
    if !matches!(args.format.as_str(), "ppm" | "png") {
        return usage(format!("--format must be ppm or png, got {:?}", args.format));
    }
    let cloud = read_splat_ply(&args.input)?;
    let jobs: Vec<(String, Camera)> = match (&args.dataset, args.orbit) {
        (Some(dir), None) => {
            let bundle = twister_core::formats::parse_colmap_dir(dir)?;
            for v in &args.views {
                if bundle.view_index(v).is_none() {
                    return usage(format!("unknown view {:?}", v));
                }
            }
            (0..bundle.poses.len())
                .filter(|&v| args.views.is_empty() || args.views.contains(&bundle.poses[v].image_name))
                .map(|v| {
                    let name = bundle.poses[v].image_name.clone();
                    let stem = Path::new(&name).file_stem().map_or(name.clone(), |s| s.to_string_lossy().into());
                    (stem, bundle.camera(v))
                })
                .collect()
        }
        (None, Some(n)) => {
            if n == 0 {
                return usage("--orbit needs at least one pose");
            }
            orbit_cameras(&cloud, args, n)
                .into_iter()
                .enumerate()
                .map(|(i, c)| (format!("orbit_{:03}", i), c))
                .collect()
        }
        _ => return usage("give exactly one of --dataset or --orbit"),
    };
    create_dir(&args.out)?;
    let mut paths = Vec::with_capacity(jobs.len());
    for (stem, camera) in jobs {
        let img = render(&cloud, &camera, config.background, &config.render).color;
        let path = args.out.join(format!("{}.{}", stem, args.format));
        write_image(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn synth_specs(args: &SynthArgs, seed: Option<u64>) -> CliResult<(VortexSpec, RigSpec, SfmSpec, [f64; 3])> {
    let mut vortex = VortexSpec::default();
    let mut rig = RigSpec::default();
    let mut sfm = SfmSpec::default();
    if let Some(s) = seed {
        vortex.seed = s;
    }
    if let Some(n) = args.vortex_gaussians {
        vortex.n_gaussians = n;
    }
    if let Some(n) = args.floor_gaussians {
        vortex.floor_gaussians = n;
    }
    if let Some(v) = args.swirl {
        vortex.swirl = v;
    }
    if let Some(n) = args.cameras {
        rig.n_cameras = n;
        rig.extra_azimuths = vec![180.0 / n.max(1) as f64];
        rig.held_out = vec![n];
    }
    if let Some(v) = args.ring_radius {
        rig.ring_radius = v;
    }
    if let Some(n) = args.size {
        rig.width = n;
        rig.height = n;
    }
    if let Some(v) = args.focal {
        rig.focal = v;
    }
    if let Some(v) = args.sfm_subsample {
        sfm.subsample = v;
    }
    if let Some(v) = args.sfm_noise {
        sfm.noise_fraction = v;
    }
    if let Some(v) = args.sfm_seed {
        sfm.seed = v;
    }
    let background = match &args.background {
        Some(text) => {
            let v = parse_floats(text, 3, "--background")?;
            [v[0], v[1], v[2]]
        }
        None => [0.0; 3],
    };
    vortex.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    rig.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((vortex, rig, sfm, background))
}

pub fn cmd_synth(args: &SynthArgs, seed: Option<u64>) -> CliResult<String> {
    let (vortex, rig, sfm, background) = synth_specs(args, seed)?;
    create_dir(&args.out)?;
    let bundle = make_dataset(&vortex, &rig, &sfm, background, &args.out)?;
    Ok(format!(
        "wrote {} views ({} held out), {} sparse points to {}\n",
        bundle.poses.len(),
        rig.held_out.len(),
        bundle.points.len(),
        args.out.display()
    ))
}

pub fn cmd_eval(args: &EvalArgs, config: &TrainConfig) -> CliResult<EvalTable> {
    let dataset = load_dataset(&args.dataset)?;
    let bundle = if args.views.is_empty() {
        if dataset.held_out.poses.is_empty() {
            twister_core::formats::parse_colmap_dir(&args.dataset)?
        } else {
            dataset.held_out.clone()
        }
    } else {
        let all = twister_core::formats::parse_colmap_dir(&args.dataset)?;
        let mut names = Vec::new();
        for v in &args.views {
            let name = match v.parse::<usize>() {
                Ok(i) if i < all.poses.len() => all.poses[i].image_name.clone(),
                Ok(i) => return usage(format!("view index {} out of range 0..{}", i, all.poses.len())),
                Err(_) if all.view_index(v).is_some() => v.clone(),
                Err(_) => return usage(format!("unknown view {:?}", v)),
            };
            names.push(name);
        }
        let others: Vec<String> = all
            .poses
            .iter()
            .map(|p| p.image_name.clone())
            .filter(|n| !names.contains(n))
            .collect();
        all.split_views(&others).0
    };
    let cloud = read_splat_ply(&args.input)?;
    let table = evaluate(&cloud, &bundle, config.background, &reference_settings())?;
    if let Some(out) = &args.out {
        write_atomic(out, table.to_string().as_bytes())?;
    }
    Ok(table)
}

pub fn cmd_info(args: &InfoArgs) -> CliResult<String> {
    let cloud = read_splat_ply(&args.input)?;
    let mut s = String::new();
    let _ = writeln!(s, "gaussians: {}", cloud.len());
    let _ = writeln!(s, "sh_degree: {}", cloud.active_sh_degree);
    if cloud.is_empty() {
        return Ok(s);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.params.positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let _ = writeln!(s, "bbox_min: {:.6} {:.6} {:.6}", lo[0], lo[1], lo[2]);
    let _ = writeln!(s, "bbox_max: {:.6} {:.6} {:.6}", hi[0], hi[1], hi[2]);
    let op: Vec<f64> = cloud.params.opacity_logits.iter().map(|&o| sigmoid(o)).collect();
    let mean = op.iter().sum::<f64>() / op.len() as f64;
    let min = op.iter().copied().fold(f64::INFINITY, f64::min);
    let max = op.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(s, "opacity: mean {:.4} min {:.4} max {:.4}", mean, min, max);
    let mut scales: Vec<f64> = (0..cloud.len()).map(|i| cloud.scale(i).into_iter().fold(0.0, f64::max)).collect();
    scales.sort_by(f64::total_cmp);
    let _ = writeln!(s, "max_scale: median {:.6} max {:.6}", scales[scales.len() / 2], scales[scales.len() - 1]);
    Ok(s)
}
