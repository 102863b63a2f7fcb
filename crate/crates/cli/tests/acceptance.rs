//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and a
//! summary; the process exits 0 either way so the numbers always reach the
//! test log. Set `ACCEPTANCE_KEEP=<dir>` to keep the working files.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twister_cli::{cmd_ingest, cmd_train, IngestArgs, TrainArgs, CHECKPOINT_FILE, METRICS_FILE, SUMMARY_FILE};
use twister_core::backprop::{finite_difference_check, FdOptions};
use twister_core::formats::{
    decode_ppm, decode_splat_ply, encode_ppm, encode_splat_ply, parse_colmap_text, read_splat_ply, write_colmap_text,
    BitDepth,
};
use twister_core::image::ImageBuffer;
use twister_core::metrics::{mse_loss, ssim};
use twister_core::prune::{auto_bounds, prune_chain, PruneConfig};
use twister_core::render::{oracle_render, render};
use twister_core::splat::SH_REST;
use twister_core::synth::{
    evaluate, load_dataset, make_dataset, plant_floaters, reference_settings, RigSpec, SfmSpec, VortexSpec,
    GROUND_TRUTH_FILE,
};
use twister_core::train::TrainConfig;
use twister_core::{Camera, CameraIntrinsics, CameraPose, RenderSettings, SplatCloud, SplatParams};

// Tolerances and budgets.
const FD_REL_TOL: f64 = 1e-4;
const FD_FRACTION: f64 = 0.95;
const FD_HARD_TOL: f64 = 1e-2;
const FD_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const RECON_ITERATIONS: usize = 2000;
const RECON_PSNR: f64 = 25.0;
const RECON_GAIN: f64 = 8.0;
const RECON_BUDGET: Duration = Duration::from_secs(15 * 60);
const PLANT_OUTSIDE: usize = 50;
const PLANT_BEHIND: usize = 20;
const PLANT_RECALL: f64 = 0.95;
const PLANT_FALSE_FRACTION: f64 = 0.01;
const PLANT_PSNR_SLACK: f64 = 0.1;
const PLANT_BUDGET: Duration = Duration::from_secs(5 * 60);
const MISSING_SLACK_DB: f64 = 2.0;
const MISSING_BUDGET: Duration = Duration::from_secs(15 * 60);
const FORMAT_PLY_SPLATS: usize = 100_000;
const FORMAT_BUDGET: Duration = Duration::from_secs(30);

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Outcome {
    fn line(&self) -> String {
        format!(
            "criterion {} {}: {} ({})",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn camera(width: usize, height: usize, focal: f64, eye: [f64; 3]) -> Camera {
    let intr = CameraIntrinsics::pinhole(1, width, height, focal);
    let pose = CameraPose::look_at(1, 1, "view", Vector3::from(eye), Vector3::zeros(), Vector3::y());
    Camera::new(&intr, &pose)
}

fn random_cloud(n: usize, seed: u64, spread: f64, degree: usize) -> SplatCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = SplatParams::zeros(n);
    for i in 0..n {
        p.positions[i] = [0; 3].map(|_| rng.gen_range(-spread..spread));
        p.log_scales[i] = [0; 3].map(|_| rng.gen_range(-2.8f64..-1.4));
        p.rotations[i] = [0; 4].map(|_| rng.gen_range(-1.0..1.0));
        p.opacity_logits[i] = rng.gen_range(-2.0..2.0);
        p.sh_dc[i] = [0; 3].map(|_| rng.gen_range(-1.0..1.5));
        let mut rest = [0.0; SH_REST];
        for v in rest.iter_mut() {
            *v = rng.gen_range(-0.2..0.2);
        }
        p.sh_rest[i] = rest;
    }
    SplatCloud::new(p, degree)
}

fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_pixels(w, h, (0..3 * w * h).map(|_| rng.gen()).collect()).unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cam = camera(32, 32, 40.0, [0.2, -0.1, -3.0]);
    let cloud = random_cloud(10, 2024, 0.5, 3);
    let target = random_image(32, 32, 4202);
    // smooth photometric objective; see the ledger for why not L1
    let loss = move |img: &ImageBuffer| {
        let (m, gm) = mse_loss(img, &target)?;
        let (s, gs) = ssim(img, &target)?;
        let g = gm.iter().zip(&gs).map(|(a, b)| 0.8 * a - 0.2 * b).collect();
        Ok((0.8 * m + 0.2 * (1.0 - s), g))
    };
    let report = finite_difference_check(
        &cloud,
        &cam,
        [0.1, 0.2, 0.3],
        &RenderSettings::default(),
        &loss,
        &FdOptions::default(),
    )
    .expect("finite-difference check runs");
    let elapsed = start.elapsed();
    let frac = report.fraction_within(FD_REL_TOL);
    let hard = report.count_above(FD_HARD_TOL);
    Outcome {
        id: 1,
        name: "gradient correctness",
        pass: frac >= FD_FRACTION && hard == 0 && elapsed < FD_BUDGET,
        detail: format!(
            "{:.2}% of {} checked coordinates within {:e} [>= {}%], {} above {:e} [= 0], {} excluded, {} [< {}]",
            100.0 * frac,
            report.checked().count(),
            FD_REL_TOL,
            100.0 * FD_FRACTION,
            hard,
            FD_HARD_TOL,
            report.num_excluded(),
            secs(elapsed),
            secs(FD_BUDGET)
        ),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let settings = RenderSettings::exact();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let n = 1 + (seed as usize * 13) % 50;
        let cloud = random_cloud(n, 500 + seed, 0.7, (seed % 4) as usize);
        let cam = camera(48, 40, 44.0, [0.5 * (seed as f64).cos(), 0.3, -3.0]);
        let bg = [0.25, 0.5, 0.75];
        let fast = render(&cloud, &cam, bg, &settings).color;
        let slow = oracle_render(&cloud, &cam, bg, &settings);
        for (a, b) in fast.pixels.iter().zip(&slow.pixels) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 2,
        name: "renderer/oracle equivalence",
        pass: worst < ORACLE_TOL && elapsed < ORACLE_BUDGET,
        detail: format!(
            "max channel difference {:.3e} over 20 scenes [< {:e}], {} [< {}]",
            worst,
            ORACLE_TOL,
            secs(elapsed),
            secs(ORACLE_BUDGET)
        ),
    }
}

/// `(mean psnr at iteration 0, mean psnr at the end)` from a metrics file.
fn read_metrics(path: &Path, iterations: usize) -> (f64, f64) {
    let text = std::fs::read_to_string(path).expect("metrics written");
    let mean = |it: usize| {
        let prefix = format!("iteration={} mean psnr=", it);
        text.lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .and_then(|rest| rest.split_whitespace().next())
            .and_then(|v| v.parse::<f64>().ok())
            .unwrap_or(f64::NAN)
    };
    (mean(0), mean(iterations))
}

fn train_run(dataset: &Path, out: &Path) -> (Duration, Result<(), String>) {
    let mut config = TrainConfig::default();
    config.iterations = RECON_ITERATIONS;
    let args = TrainArgs {
        dataset: dataset.to_path_buf(),
        out: out.to_path_buf(),
        init: None,
        iterations: None,
        held_out: None,
    };
    let start = Instant::now();
    let r = cmd_train(&args, &config).map(|_| ()).map_err(|e| e.to_string());
    (start.elapsed(), r)
}

fn reconstruction(run: &Path, elapsed: Duration, result: &Result<(), String>) -> Outcome {
    let mut o = Outcome {
        id: 3,
        name: "end-to-end synthetic reconstruction",
        pass: false,
        detail: String::new(),
    };
    if let Err(e) = result {
        o.detail = format!("training failed: {}", e);
        return o;
    }
    let (before, after) = read_metrics(&run.join(METRICS_FILE), RECON_ITERATIONS);
    o.pass = after >= RECON_PSNR && after - before >= RECON_GAIN && elapsed < RECON_BUDGET;
    o.detail = format!(
        "held-out PSNR {:.2} dB at iteration {} [>= {}], {:.2} dB at iteration 0, gain {:.2} dB [>= {}], {} [< {}]",
        after,
        RECON_ITERATIONS,
        RECON_PSNR,
        before,
        after - before,
        RECON_GAIN,
        secs(elapsed),
        secs(RECON_BUDGET)
    );
    o
}

struct PlantResult {
    recall: f64,
    false_removed: usize,
    non_planted: usize,
    psnr_before: f64,
    psnr_after: f64,
}

fn plant_and_prune(cloud: &SplatCloud, dataset: &Path) -> PlantResult {
    let ds = load_dataset(dataset).expect("dataset loads");
    let aabb = auto_bounds(&ds.train.points, 1.0, 0.25).expect("bounds");
    let planted = plant_floaters(cloud, &ds.train, &aabb, PLANT_OUTSIDE, PLANT_BEHIND, 99).expect("planting");
    let settings = reference_settings();
    let bg = ds.background();
    let psnr_before = evaluate(&planted.cloud, &ds.held_out, bg, &settings).unwrap().mean_psnr().unwrap();
    let pruned = prune_chain(&planted.cloud, &ds.train, &PruneConfig::default()).expect("prune chain");
    let psnr_after = evaluate(&pruned.cloud, &ds.held_out, bg, &settings).unwrap().mean_psnr().unwrap();
    let all = planted.all();
    let removed = pruned.report.removed();
    let hits = removed.iter().filter(|i| all.contains(i)).count();
    PlantResult {
        recall: hits as f64 / all.len() as f64,
        false_removed: removed.len() - hits,
        non_planted: cloud.len(),
        psnr_before,
        psnr_after,
    }
}

fn planted_floaters(run: &Path, dataset: &Path) -> (Outcome, String) {
    let start = Instant::now();
    let mut o = Outcome {
        id: 4,
        name: "planted-floater removal",
        pass: false,
        detail: String::new(),
    };
    let cloud = match read_splat_ply(&run.join(CHECKPOINT_FILE)) {
        Ok(c) => c,
        Err(e) => {
            o.detail = format!("no trained checkpoint: {}", e);
            return (o, String::new());
        }
    };
    let r = plant_and_prune(&cloud, dataset);
    let elapsed = start.elapsed();
    let false_frac = r.false_removed as f64 / r.non_planted as f64;
    o.pass = r.recall >= PLANT_RECALL
        && false_frac <= PLANT_FALSE_FRACTION
        && r.psnr_after >= r.psnr_before - PLANT_PSNR_SLACK
        && elapsed < PLANT_BUDGET;
    o.detail = format!(
        "trained cloud: {:.1}% of planted removed [>= {}%], {} of {} non-planted removed = {:.2}% [<= {}%], held-out PSNR {:.2} -> {:.2} dB [>= before - {}], {} [< {}]",
        100.0 * r.recall,
        100.0 * PLANT_RECALL,
        r.false_removed,
        r.non_planted,
        100.0 * false_frac,
        100.0 * PLANT_FALSE_FRACTION,
        r.psnr_before,
        r.psnr_after,
        PLANT_PSNR_SLACK,
        secs(elapsed),
        secs(PLANT_BUDGET)
    );
    let gt = read_splat_ply(&dataset.join(GROUND_TRUTH_FILE)).expect("ground truth written");
    let g = plant_and_prune(&gt, dataset);
    let note = format!(
        "  note: same protocol on the ground-truth cloud: {:.1}% planted removed, {} of {} non-planted removed = {:.2}%, held-out PSNR {:.2} -> {:.2} dB",
        100.0 * g.recall,
        g.false_removed,
        g.non_planted,
        100.0 * g.false_removed as f64 / g.non_planted as f64,
        g.psnr_before,
        g.psnr_after
    );
    (o, note)
}

/// Removes the camera, image and observation lines of `image_name`.
fn delete_view(dir: &Path, image_name: &str) -> u32 {
    let images = std::fs::read_to_string(dir.join("images.txt")).unwrap();
    let mut out = Vec::new();
    let mut lines = images.lines();
    let mut removed = None;
    while let Some(line) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with('#') && toks.len() == 10 && toks[9] == image_name {
            removed = Some(toks[8].parse::<u32>().unwrap());
            lines.next();
            continue;
        }
        out.push(line);
    }
    std::fs::write(dir.join("images.txt"), out.join("\n") + "\n").unwrap();
    let camera_id = removed.expect("view present");
    let cameras = std::fs::read_to_string(dir.join("cameras.txt")).unwrap();
    let kept: Vec<&str> = cameras
        .lines()
        .filter(|l| l.starts_with('#') || l.split_whitespace().next() != Some(&camera_id.to_string()))
        .collect();
    std::fs::write(dir.join("cameras.txt"), kept.join("\n") + "\n").unwrap();
    camera_id
}

fn registration(dir: &Path, work: &Path) -> Outcome {
    let start = Instant::now();
    let mut o = Outcome {
        id: 5,
        name: "registration diagnostics",
        pass: false,
        detail: String::new(),
    };
    make_dataset(&VortexSpec::default(), &RigSpec::default(), &SfmSpec::default(), [0.0; 3], dir).unwrap();
    delete_view(dir, &RigSpec::image_name(3));
    let ingest = IngestArgs {
        colmap_dir: dir.to_path_buf(),
        expected_cameras: None,
        out: work.join("ingest"),
    };
    if let Err(e) = cmd_ingest(&ingest) {
        o.detail = format!("ingest failed: {}", e);
        return o;
    }
    let summary = std::fs::read_to_string(work.join("ingest").join(SUMMARY_FILE)).unwrap();
    let missing: Vec<&str> = summary.lines().filter(|l| l.contains("missing view")).collect();
    let warning_ok = missing.len() == 1 && missing[0].contains("7 of 8");
    let run = work.join("train7");
    let (_, result) = train_run(dir, &run);
    let (before, after) = match &result {
        Ok(()) => read_metrics(&run.join(METRICS_FILE), RECON_ITERATIONS),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let elapsed = start.elapsed();
    let psnr_floor = RECON_PSNR - MISSING_SLACK_DB;
    let gain_floor = RECON_GAIN - MISSING_SLACK_DB;
    o.pass = warning_ok && after >= psnr_floor && after - before >= gain_floor && elapsed < MISSING_BUDGET;
    o.detail = format!(
        "{} missing-view warning(s) [= 1, \"7 of 8\": {}], 7-view held-out PSNR {:.2} dB [>= {}], gain {:.2} dB [>= {}], {} [< {}]",
        missing.len(),
        warning_ok,
        after,
        psnr_floor,
        after - before,
        gain_floor,
        secs(elapsed),
        secs(MISSING_BUDGET)
    );
    if let Err(e) = result {
        o.detail.push_str(&format!(", training failed: {}", e));
    }
    o
}

fn format_integrity(dataset: &Path, work: &Path) -> Outcome {
    let start = Instant::now();
    // COLMAP text: parse -> serialize -> parse, and serialization is stable
    let first = parse_colmap_text(dataset).unwrap();
    let a = work.join("colmap_a");
    let b = work.join("colmap_b");
    write_colmap_text(&a, &first.intrinsics, &first.poses, &first.points).unwrap();
    let second = parse_colmap_text(&a).unwrap();
    write_colmap_text(&b, &second.intrinsics, &second.poses, &second.points).unwrap();
    let same_files = ["cameras.txt", "images.txt", "points3D.txt"]
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    let colmap_ok = first.intrinsics == second.intrinsics
        && first.poses == second.poses
        && first.points == second.points
        && same_files;

    // PLY: f32 payload survives decode/encode unchanged
    let cloud = random_cloud(FORMAT_PLY_SPLATS, 31, 2.0, 3);
    let bytes = encode_splat_ply(&cloud);
    let (decoded, _) = decode_splat_ply(&bytes).unwrap();
    let rounded = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
    let values_ok = twister_core::splat::ParamGroup::ALL
        .iter()
        .all(|&g| decoded.params.group(g) == rounded(cloud.params.group(g)).as_slice());
    let ply_ok = encode_splat_ply(&decoded) == bytes && values_ok && decoded.len() == FORMAT_PLY_SPLATS;

    // PPM: quantized images round-trip exactly at both depths
    let mut ppm_ok = true;
    for (depth, levels) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
        let mut img = random_image(61, 37, 77);
        for v in img.pixels.iter_mut() {
            *v = (*v * levels).round() / levels;
        }
        let back = decode_ppm(&encode_ppm(&img, depth)).unwrap();
        ppm_ok &= back == img && encode_ppm(&back, depth) == encode_ppm(&img, depth);
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 6,
        name: "format integrity",
        pass: colmap_ok && ply_ok && ppm_ok && elapsed < FORMAT_BUDGET,
        detail: format!(
            "COLMAP idempotent: {}, PLY bit-exact on {} splats: {}, PPM lossless (8/16-bit): {}, {} [< {}]",
            colmap_ok,
            FORMAT_PLY_SPLATS,
            ply_ok,
            ppm_ok,
            secs(elapsed),
            secs(FORMAT_BUDGET)
        ),
    }
}

fn determinism(a: &Path, b: &Path, ta: Duration, tb: Duration, results: [&Result<(), String>; 2]) -> Outcome {
    let mut o = Outcome {
        id: 7,
        name: "determinism",
        pass: false,
        detail: String::new(),
    };
    if let Some(Err(e)) = results.iter().find(|r| r.is_err()) {
        o.detail = format!("training failed: {}", e);
        return o;
    }
    let read = |dir: &Path, name: &str| std::fs::read(dir.join(name)).unwrap_or_default();
    let meta = format!("{}.meta", CHECKPOINT_FILE);
    let same_ply = read(a, CHECKPOINT_FILE) == read(b, CHECKPOINT_FILE);
    let same_meta = read(a, &meta) == read(b, &meta);
    let total = ta + tb;
    let budget = 2 * RECON_BUDGET;
    o.pass = same_ply && same_meta && !read(a, CHECKPOINT_FILE).is_empty() && total < budget;
    o.detail = format!(
        "checkpoints identical: {}, sidecars identical: {}, {} threads, two runs {} [< {}]",
        same_ply,
        same_meta,
        rayon::current_num_threads(),
        secs(total),
        secs(budget)
    );
    o
}

fn main() {
    let keep = std::env::var_os("ACCEPTANCE_KEEP").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let work = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&work).unwrap();
    let dataset = work.join("dataset");
    make_dataset(&VortexSpec::default(), &RigSpec::default(), &SfmSpec::default(), [0.0; 3], &dataset).unwrap();

    let mut outcomes = Vec::new();
    let mut notes = Vec::new();
    let report = |o: Outcome, outcomes: &mut Vec<Outcome>| {
        println!("{}", o.line());
        outcomes.push(o);
    };
    report(gradient_correctness(), &mut outcomes);
    report(oracle_equivalence(), &mut outcomes);

    let run_a = work.join("train_a");
    let run_b = work.join("train_b");
    let (ta, ra) = train_run(&dataset, &run_a);
    report(reconstruction(&run_a, ta, &ra), &mut outcomes);
    let (o4, note) = planted_floaters(&run_a, &dataset);
    report(o4, &mut outcomes);
    if !note.is_empty() {
        println!("{}", note);
        notes.push(note);
    }
    report(registration(&work.join("dataset_7"), &work), &mut outcomes);
    report(format_integrity(&dataset, &work), &mut outcomes);
    let (tb, rb) = train_run(&dataset, &run_b);
    report(determinism(&run_a, &run_b, ta, tb, [&ra, &rb]), &mut outcomes);

    outcomes.sort_by_key(|o| o.id);
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!();
    println!("acceptance summary:");
    for o in &outcomes {
        println!("{}", o.line());
    }
    for n in &notes {
        println!("{}", n);
    }
    println!("acceptance: {} of {} criteria pass", passed, outcomes.len());
}
