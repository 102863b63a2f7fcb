//! Synthetic desk-scale rig: a tornado-like vortex of Gaussians over a
//! textured floor disc, a ring of inward-looking cameras, ground-truth
//! renders, a noisy sparse point cloud in COLMAP text form, and held-out
//! evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::camera::{matrix_to_quat, Camera, CameraIntrinsics, CameraPose, SceneExtent};
use crate::error::{Error, Result};
use crate::formats::{parse_colmap_dir, write_colmap_text, write_image_with_depth, write_splat_ply, BitDepth};
use crate::formats::{SceneBundle, SparsePoints};
use crate::image::ImageBuffer;
use crate::io::write_atomic;
use crate::metrics::{psnr, ssim};
use crate::render::{render, RenderSettings};
use crate::splat::{logit, SplatCloud, SplatParams, SH_C0};

pub const RIGSPEC_FILE: &str = "rigspec";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.ply";

#[derive(Debug, Clone, PartialEq)]
pub struct VortexSpec {
    pub n_gaussians: usize,
    pub height: f64,
    pub base_radius: f64,
    pub top_radius: f64,
    /// Helix turns per unit height.
    pub swirl: f64,
    /// Number of bright helical bands.
    pub arms: usize,
    pub opacity_range: (f64, f64),
    pub gray_range: (f64, f64),
    pub floor_gaussians: usize,
    pub floor_radius: f64,
    pub seed: u64,
}

impl Default for VortexSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 2000,
            height: 1.0,
            base_radius: 0.1,
            top_radius: 0.35,
            swirl: 2.0,
            arms: 3,
            opacity_range: (0.3, 0.8),
            gray_range: (0.25, 0.95),
            floor_gaussians: 500,
            floor_radius: 0.4,
            seed: 7,
        }
    }
}

impl VortexSpec {
    pub fn radius_at(&self, z: f64) -> f64 {
        let t = (z / self.height).clamp(0.0, 1.0);
        self.base_radius + (self.top_radius - self.base_radius) * t
    }

    /// Maps a uniform variate to a height with density proportional to the
    /// shell radius, so centers are uniform per unit area.
    pub fn sample_height(&self, u: f64) -> f64 {
        let (a, b) = (self.base_radius, self.top_radius - self.base_radius);
        let t = if b.abs() < 1e-12 * a {
            u
        } else {
            // solve a t + b t^2 / 2 = u (a + b / 2)
            let c = u * (a + 0.5 * b);
            (-a + (a * a + 2.0 * b * c).sqrt()) / b
        };
        t.clamp(0.0, 1.0) * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let (o0, o1) = self.opacity_range;
        let (g0, g1) = self.gray_range;
        if !(self.base_radius > 0.0 && self.top_radius > 0.0 && self.height > 0.0 && self.floor_radius > 0.0) {
            return Err(Error::InvalidParameter("vortex radii and height must be positive".into()));
        }
        if !(0.0 < o0 && o0 <= o1 && o1 < 1.0) || !(0.0 <= g0 && g0 <= g1 && g1 <= 1.0) {
            return Err(Error::InvalidParameter("opacity range must lie in (0,1), gray range in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigSpec {
    /// Cameras evenly spaced on the ring.
    pub n_cameras: usize,
    pub ring_radius: f64,
    /// Camera elevation; one entry per camera, or a single shared value.
    pub heights: Vec<f64>,
    pub look_at: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Azimuths in degrees of extra cameras appended after the ring.
    pub extra_azimuths: Vec<f64>,
    /// Indices into the full camera list that are excluded from training.
    pub held_out: Vec<usize>,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            n_cameras: 8,
            ring_radius: 3.0,
            heights: vec![0.9],
            look_at: [0.0, 0.0, 0.5],
            width: 128,
            height: 128,
            focal: 160.0,
            extra_azimuths: vec![22.5],
            held_out: vec![8],
        }
    }
}

impl RigSpec {
    pub fn total_cameras(&self) -> usize {
        self.n_cameras + self.extra_azimuths.len()
    }

    pub fn image_name(index: usize) -> String {
        format!("cam_{:02}.ppm", index)
    }

    pub fn held_out_names(&self) -> Vec<String> {
        self.held_out.iter().map(|&i| Self::image_name(i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.total_cameras();
        if self.n_cameras < 2 {
            return Err(Error::InvalidParameter("a rig needs at least 2 ring cameras".into()));
        }
        if self.held_out.iter().any(|&i| i >= total) {
            return Err(Error::InvalidParameter(format!("held-out index out of range 0..{}", total)));
        }
        if !(self.heights.len() == 1 || self.heights.len() == total) {
            return Err(Error::InvalidParameter(format!(
                "heights needs 1 or {} entries, got {}",
                total,
                self.heights.len()
            )));
        }
        if self.width == 0 || self.height == 0 || !(self.focal > 0.0) || !(self.ring_radius > 0.0) {
            return Err(Error::InvalidParameter("image size, focal and ring radius must be positive".into()));
        }
        Ok(())
    }
}

/// Synthetic structure-from-motion stand-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmSpec {
    /// Fraction of ground-truth centers kept.
    pub subsample: f64,
    /// Positional noise standard deviation as a fraction of scene extent.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SfmSpec {
    fn default() -> Self {
        Self {
            subsample: 0.25,
            noise_fraction: 0.02,
            seed: 11,
        }
    }
}

fn gray_dc(gray: f64) -> [f64; 3] {
    [(gray - 0.5) / SH_C0; 3]
}

/// Rotation whose columns are the given orthonormal axes.
fn frame_quat(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> [f64; 4] {
    matrix_to_quat(&Matrix3::from_columns(&[a, b, c]))
}

pub fn generate_scene(spec: &VortexSpec) -> Result<SplatCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_gaussians;
    let mut p = SplatParams::zeros(0);
    let jitter = Normal::new(0.0, 0.04).expect("valid sigma");
    let tau = std::f64::consts::TAU;
    let sqrt_n = (n.max(1) as f64).sqrt();
    for _ in 0..n {
        let z = spec.sample_height(rng.gen());
        let phi = rng.gen::<f64>() * tau;
        let r = spec.radius_at(z) * (1.0 + jitter.sample(&mut rng));
        let radial = Vector3::new(phi.cos(), phi.sin(), 0.0);
        let tangent = Vector3::new(-phi.sin(), phi.cos(), 0.0);
        let up = Vector3::z();
        let pos = radial * r + up * z;
        let band = 0.5 + 0.5 * (spec.arms as f64 * phi - tau * spec.swirl * z).cos();
        let (g0, g1) = spec.gray_range;
        let (o0, o1) = spec.opacity_range;
        let unit = spec.radius_at(z) / sqrt_n;
        let mut row = SplatParams::zeros(1);
        row.positions[0] = [pos.x, pos.y, pos.z];
        row.log_scales[0] = [(4.0 * unit).ln(), (2.0 * unit).ln(), (3.0 * unit).ln()];
        row.rotations[0] = frame_quat(tangent, radial, up);
        row.opacity_logits[0] = logit(o0 + (o1 - o0) * rng.gen::<f64>());
        row.sh_dc[0] = gray_dc(g0 + (g1 - g0) * band);
        p.push_row_from(&row, 0);
    }
    let cell = spec.floor_radius / 4.0;
    let floor_scale = spec.floor_radius / (spec.floor_gaussians.max(1) as f64).sqrt() * 1.6;
    for _ in 0..spec.floor_gaussians {
        let rad = spec.floor_radius * rng.gen::<f64>().sqrt();
        let phi = rng.gen::<f64>() * tau;
        let (x, y) = (rad * phi.cos(), rad * phi.sin());
        let spin = rng.gen::<f64>() * tau;
        let a = Vector3::new(spin.cos(), spin.sin(), 0.0);
        let b = Vector3::new(-spin.sin(), spin.cos(), 0.0);
        let checker = ((x / cell).floor() + (y / cell).floor()).rem_euclid(2.0);
        let mut row = SplatParams::zeros(1);
        row.positions[0] = [x, y, 0.0];
        row.log_scales[0] = [floor_scale.ln(), floor_scale.ln(), (0.1 * floor_scale).ln()];
        row.rotations[0] = frame_quat(a, b, Vector3::z());
        row.opacity_logits[0] = logit(0.8);
        row.sh_dc[0] = gray_dc(0.2 + 0.45 * checker);
        p.push_row_from(&row, 0);
    }
    Ok(SplatCloud::new(p, 0))
}

/// Ring cameras plus extras, each looking at `look_at` with world z up.
/// Every image gets its own camera id; intrinsics are identical.
pub fn generate_rig(spec: &RigSpec) -> Result<(BTreeMap<u32, CameraIntrinsics>, Vec<CameraPose>)> {
    spec.validate()?;
    let mut intrinsics = BTreeMap::new();
    let mut poses = Vec::new();
    let target = Vector3::from(spec.look_at);
    let azimuths = (0..spec.n_cameras)
        .map(|i| 360.0 * i as f64 / spec.n_cameras as f64)
        .chain(spec.extra_azimuths.iter().copied());
    for (i, az) in azimuths.enumerate() {
        let id = i as u32 + 1;
        let h = if spec.heights.len() == 1 { spec.heights[0] } else { spec.heights[i] };
        let a = az.to_radians();
        let eye = Vector3::new(spec.ring_radius * a.cos(), spec.ring_radius * a.sin(), h);
        intrinsics.insert(id, CameraIntrinsics::pinhole(id, spec.width, spec.height, spec.focal));
        poses.push(CameraPose::look_at(id, id, RigSpec::image_name(i), eye, target, Vector3::z()));
    }
    Ok((intrinsics, poses))
}

/// Subsampled, noise-perturbed ground-truth centers with visibility tracks.
/// Points seen by fewer than two cameras are dropped. Updates each pose's
/// observation count.
pub fn synthetic_sfm(
    gt: &SplatCloud,
    intrinsics: &BTreeMap<u32, CameraIntrinsics>,
    poses: &mut [CameraPose],
    spec: &SfmSpec,
) -> SparsePoints {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cameras: Vec<Camera> = poses.iter().map(|p| Camera::new(&intrinsics[&p.camera_id], p)).collect();
    let centers: Vec<Vector3<f64>> = poses.iter().map(|p| p.center()).collect();
    let extent = SceneExtent::from_camera_centers(&centers).radius;
    let sigma = spec.noise_fraction * extent;
    let keep = ((gt.len() as f64) * spec.subsample.clamp(0.0, 1.0)).round() as usize;
    let mut chosen = sample(&mut rng, gt.len(), keep).into_vec();
    chosen.sort_unstable();
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("non-negative sigma");
    let mut points = SparsePoints::default();
    let mut observed = vec![0usize; poses.len()];
    for i in chosen {
        let mut q = gt.params.positions[i];
        if sigma > 0.0 {
            for v in q.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        let qv = Vector3::from(q);
        let seen: Vec<usize> = cameras
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.project(&qv).is_some_and(|(u, v)| {
                    u >= 0.0 && v >= 0.0 && u < c.width as f64 && v < c.height as f64
                })
            })
            .map(|(k, _)| k)
            .collect();
        if seen.len() < 2 {
            continue;
        }
        for &k in &seen {
            observed[k] += 1;
        }
        let gray = (0.5 + SH_C0 * gt.params.sh_dc[i][0]).clamp(0.0, 1.0);
        let c = (gray * 255.0).round() as u8;
        points.point_ids.push(points.len() as u64 + 1);
        points.positions.push(q);
        points.colors.push([c, c, c]);
        points.track_lengths.push(seen.len());
    }
    for (p, n) in poses.iter_mut().zip(observed) {
        p.num_observations = n;
    }
    points
}

/// What a dataset directory records about how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct RigInfo {
    /// Ring cameras the capture was meant to register.
    pub expected_cameras: usize,
    pub held_out: Vec<String>,
    pub background: [f64; 3],
}

impl RigInfo {
    pub fn to_text(&self, extra: &[(String, String)]) -> String {
        let bg = self.background;
        let mut s = format!(
            "expected_cameras = {}\nheld_out = {}\nbackground = {},{},{}\n",
            self.expected_cameras,
            self.held_out.join(","),
            bg[0],
            bg[1],
            bg[2]
        );
        for (k, v) in extra {
            s.push_str(&format!("{} = {}\n", k, v));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut info = RigInfo {
            expected_cameras: 0,
            held_out: Vec::new(),
            background: [0.0; 3],
        };
        let bad = |line: &str| Error::Config(format!("rigspec: malformed line {:?}", line));
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            let v = v.trim();
            match k.trim() {
                "expected_cameras" => info.expected_cameras = v.parse().map_err(|_| bad(line))?,
                "held_out" => {
                    info.held_out = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
                }
                "background" => {
                    let parts: Vec<f64> = v
                        .split(',')
                        .map(|x| x.trim().parse().map_err(|_| bad(line)))
                        .collect::<Result<_>>()?;
                    if parts.len() != 3 {
                        return Err(bad(line));
                    }
                    info.background = [parts[0], parts[1], parts[2]];
                }
                _ => {}
            }
        }
        Ok(info)
    }

    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(RIGSPEC_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text).map(Some)
    }
}

/// Settings used for ground-truth renders and evaluation.
pub fn reference_settings() -> RenderSettings {
    RenderSettings::exact()
}

/// Writes a complete dataset to `out`: COLMAP text files, 16-bit PPM
/// images under `images/`, the ground-truth cloud and a `rigspec` file.
pub fn make_dataset(
    vortex: &VortexSpec,
    rig: &RigSpec,
    sfm: &SfmSpec,
    background: [f64; 3],
    out: &Path,
) -> Result<SceneBundle> {
    let gt = generate_scene(vortex)?;
    let (intrinsics, mut poses) = generate_rig(rig)?;
    let points = synthetic_sfm(&gt, &intrinsics, &mut poses, sfm);
    let settings = reference_settings();
    let images: Vec<ImageBuffer> = poses
        .par_iter()
        .map(|p| render(&gt, &Camera::new(&intrinsics[&p.camera_id], p), background, &settings).color)
        .collect();

    let image_dir = out.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    for (p, img) in poses.iter().zip(&images) {
        write_image_with_depth(img, &image_dir.join(&p.image_name), BitDepth::Sixteen)?;
    }
    write_colmap_text(out, &intrinsics, &poses, &points)?;
    write_splat_ply(&gt, &out.join(GROUND_TRUTH_FILE))?;
    let info = RigInfo {
        expected_cameras: rig.n_cameras,
        held_out: rig.held_out_names(),
        background,
    };
    let extra = vec![
        ("ring_radius".to_string(), rig.ring_radius.to_string()),
        ("focal".to_string(), rig.focal.to_string()),
        ("image_size".to_string(), format!("{}x{}", rig.width, rig.height)),
        ("vortex_gaussians".to_string(), vortex.n_gaussians.to_string()),
        ("floor_gaussians".to_string(), vortex.floor_gaussians.to_string()),
        ("vortex_seed".to_string(), vortex.seed.to_string()),
        ("sfm_subsample".to_string(), sfm.subsample.to_string()),
        ("sfm_noise_fraction".to_string(), sfm.noise_fraction.to_string()),
        ("sfm_seed".to_string(), sfm.seed.to_string()),
    ];
    write_atomic(&out.join(RIGSPEC_FILE), info.to_text(&extra).as_bytes())?;

    Ok(SceneBundle {
        intrinsics,
        poses: poses.clone(),
        points,
        images: poses.iter().map(|p| p.image_name.clone()).zip(images).collect(),
        warnings: Vec::new(),
    })
}

/// A parsed dataset split into training and held-out views.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: SceneBundle,
    pub held_out: SceneBundle,
    pub info: Option<RigInfo>,
}

impl Dataset {
    pub fn background(&self) -> [f64; 3] {
        self.info.as_ref().map_or([0.0; 3], |i| i.background)
    }
}

/// Parses `dir` and splits off the views its `rigspec` marks as held out.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let bundle = parse_colmap_dir(dir)?;
    let info = RigInfo::read(dir)?;
    let names = info.as_ref().map(|i| i.held_out.clone()).unwrap_or_default();
    let (train, held_out) = bundle.split_views(&names);
    Ok(Dataset { train, held_out, info })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub view: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn mean_psnr(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.psnr).sum::<f64>() / self.rows.len() as f64)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len() as f64)
    }
}

impl fmt::Display for EvalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(f, "view={} psnr={:.4} ssim={:.6}", r.view, r.psnr, r.ssim)?;
        }
        if let (Some(p), Some(s)) = (self.mean_psnr(), self.mean_ssim()) {
            writeln!(f, "mean psnr={:.4} ssim={:.6}", p, s)?;
        }
        Ok(())
    }
}

/// Renders every view of `views` that has an image and scores it.
pub fn evaluate(
    cloud: &SplatCloud,
    views: &SceneBundle,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<EvalTable> {
    let rows: Vec<Result<Option<EvalRow>>> = (0..views.poses.len())
        .into_par_iter()
        .map(|v| {
            let Some(gt) = views.image(v) else {
                return Ok(None);
            };
            let img = render(cloud, &views.camera(v), background, settings).color;
            Ok(Some(EvalRow {
                view: views.poses[v].image_name.clone(),
                psnr: psnr(&img, gt)?,
                ssim: ssim(&img, gt)?.0,
            }))
        })
        .collect();
    let mut table = EvalTable::default();
    for r in rows {
        if let Some(row) = r? {
            table.rows.push(row);
        }
    }
    Ok(table)
}

/// Where planted floaters went, as indices into the returned cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub cloud: SplatCloud,
    pub outside: Vec<usize>,
    pub behind: Vec<usize>,
}

impl Planted {
    pub fn all(&self) -> Vec<usize> {
        self.outside.iter().chain(&self.behind).copied().collect()
    }
}

/// Appends `n_outside` small Gaussians outside `aabb` (within one box width
/// of it, away from the cameras) and `n_behind` Gaussians behind and above
/// the cameras of `views` that no view can see.
pub fn plant_floaters(
    cloud: &SplatCloud,
    views: &SceneBundle,
    aabb: &crate::prune::Aabb,
    n_outside: usize,
    n_behind: usize,
    seed: u64,
) -> Result<Planted> {
    let cameras = views.cameras();
    if cameras.is_empty() && n_behind > 0 {
        return Err(Error::InsufficientViews(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.01f64;
    let margin_px = 24.0;
    let unseen = |p: &Vector3<f64>| {
        cameras.iter().all(|c| {
            let q = c.world_to_camera(p);
            if q.z <= 1e-3 {
                return true;
            }
            let (u, v) = (c.fx * q.x / q.z + c.cx, c.fy * q.y / q.z + c.cy);
            u < -margin_px || v < -margin_px || u > c.width as f64 + margin_px || v > c.height as f64 + margin_px
        })
    };
    let mut out = cloud.clone();
    let row = |out: &mut SplatCloud, p: Vector3<f64>, rng: &mut ChaCha8Rng| {
        let mut r = SplatParams::zeros(1);
        r.positions[0] = [p.x, p.y, p.z];
        r.log_scales[0] = [scale.ln(); 3];
        r.rotations[0] = [1.0, 0.0, 0.0, 0.0];
        r.opacity_logits[0] = logit(0.6);
        r.sh_dc[0] = gray_dc(rng.gen_range(0.3..0.9));
        out.params.push_row_from(&r, 0);
        out.len() - 1
    };
    let mut outside = Vec::with_capacity(n_outside);
    let mut guard = 0usize;
    while outside.len() < n_outside {
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::InvalidParameter("could not place floaters outside the box".into()));
        }
        let p: Vector3<f64> = Vector3::from_fn(|k, _| {
            let w = aabb.max[k] - aabb.min[k];
            rng.gen_range(aabb.min[k] - w..aabb.max[k] + w)
        });
        if aabb.contains([p.x, p.y, p.z]) || cameras.iter().any(|c| (c.center() - p).norm() < 0.3) {
            continue;
        }
        outside.push(row(&mut out, p, &mut rng));
    }
    let mut behind = Vec::with_capacity(n_behind);
    guard = 0;
    while behind.len() < n_behind {
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::InvalidParameter("could not place unseen floaters".into()));
        }
        let c = &cameras[behind.len() % cameras.len()];
        let back = c.rotation.transpose() * Vector3::new(0.0, 0.0, -1.0);
        let jitter = Vector3::from_fn(|_, _| rng.gen_range(-0.3..0.3));
        // directly behind a ring camera is in front of the opposite one
        let lift = Vector3::z() * rng.gen_range(3.0..3.5);
        let p = c.center() + back * rng.gen_range(0.2..1.0) + jitter + lift;
        if !unseen(&p) {
            continue;
        }
        behind.push(row(&mut out, p, &mut rng));
    }
    Ok(Planted {
        cloud: out,
        outside,
        behind,
    })
}
