use std::path::{Path, PathBuf};

use twister_cli::{run_from, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use twister_core::formats::{parse_colmap_dir, read_image, read_splat_ply, write_splat_ply};
use twister_core::prune::auto_bounds;
use twister_core::render::render;
use twister_core::synth::{load_dataset, plant_floaters, GROUND_TRUTH_FILE};
use twister_core::SplatCloud;

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["twister"];
    v.extend_from_slice(args);
    run_from(v)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small dataset so the whole file runs in seconds.
fn small_dataset(root: &Path) -> PathBuf {
    let ds = root.join("ds");
    let code = run(&[
        "synth",
        "--out",
        s(&ds),
        "--vortex-gaussians",
        "300",
        "--floor-gaussians",
        "80",
        "--size",
        "40",
        "--focal",
        "50",
    ]);
    assert_eq!(code, EXIT_OK);
    ds
}

#[test]
fn synth_writes_training_and_held_out_views() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let images: Vec<_> = std::fs::read_dir(ds.join("images")).unwrap().collect();
    assert_eq!(images.len(), 9);
    assert!(ds.join("rigspec").is_file() && ds.join(GROUND_TRUTH_FILE).is_file());
    let d = load_dataset(&ds).unwrap();
    assert_eq!((d.train.poses.len(), d.held_out.poses.len()), (8, 1));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_dataset(&tmp.path().join("a"));
    let b = small_dataset(&tmp.path().join("b"));
    for f in ["cameras.txt", "images.txt", "points3D.txt", "rigspec", GROUND_TRUTH_FILE, "images/cam_05.ppm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ingest_reports_clean_dataset_and_missing_view() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let out = tmp.path().join("ingest");
    assert_eq!(run(&["ingest", s(&ds), "--out", s(&out)]), EXIT_OK);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("views: 8\n") && summary.contains("warnings: 0\n"), "{summary}");
    assert!(read_splat_ply(&out.join("init.ply")).unwrap().len() > 0);

    // drop cam_02: its camera line and both image lines
    let images = std::fs::read_to_string(ds.join("images.txt")).unwrap();
    let lines: Vec<&str> = images.lines().collect();
    let at = lines.iter().position(|l| l.ends_with(" cam_02.ppm")).unwrap();
    let kept: Vec<&str> = lines.iter().enumerate().filter(|(i, _)| *i != at && *i != at + 1).map(|(_, l)| *l).collect();
    std::fs::write(ds.join("images.txt"), kept.join("\n") + "\n").unwrap();
    let cams = std::fs::read_to_string(ds.join("cameras.txt")).unwrap();
    let kept: Vec<&str> = cams.lines().filter(|l| !l.starts_with("3 ")).collect();
    std::fs::write(ds.join("cameras.txt"), kept.join("\n") + "\n").unwrap();

    assert_eq!(run(&["ingest", s(&ds), "--out", s(&out)]), EXIT_OK);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    let missing: Vec<&str> = summary.lines().filter(|l| l.contains("missing view")).collect();
    assert_eq!(missing.len(), 1, "{summary}");
    assert!(missing[0].contains("7 of 8"));
}

#[test]
fn ingest_without_points_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    std::fs::remove_file(ds.join("points3D.txt")).unwrap();
    assert_eq!(run(&["ingest", s(&ds), "--out", s(&tmp.path().join("o"))]), EXIT_RUNTIME);
}

#[test]
fn zero_iterations_returns_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let ing = tmp.path().join("ingest");
    let out = tmp.path().join("t");
    assert_eq!(run(&["ingest", s(&ds), "--out", s(&ing)]), EXIT_OK);
    assert_eq!(run(&["train", s(&ds), "--out", s(&out), "--iterations", "0"]), EXIT_OK);
    assert_eq!(
        std::fs::read(out.join("checkpoint.ply")).unwrap(),
        std::fs::read(ing.join("init.ply")).unwrap()
    );
    assert_eq!(std::fs::read_to_string(out.join("train.log")).unwrap(), "");
}

#[test]
fn training_is_reproducible_and_logs_every_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let base = ["--set", "densify_start_iter=10", "--set", "densify_interval=10", "--set", "checkpoint_interval=20"];
    let mut outs = Vec::new();
    for (name, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let out = tmp.path().join(name);
        let mut args = vec!["--seed", seed, "train", s(&ds), "--out", s(&out), "--iterations", "40"];
        args.extend_from_slice(&base);
        // `s` borrows `out`, so read the files after the run
        assert_eq!(run(&args), EXIT_OK);
        outs.push(out);
    }
    let read = |d: &PathBuf, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&outs[0], "checkpoint.ply"), read(&outs[1], "checkpoint.ply"));
    assert_eq!(read(&outs[0], "checkpoint.ply.meta"), read(&outs[1], "checkpoint.ply.meta"));
    assert_ne!(read(&outs[0], "checkpoint.ply"), read(&outs[2], "checkpoint.ply"));
    let log = String::from_utf8(read(&outs[0], "train.log")).unwrap();
    assert_eq!(log.lines().count(), 40);
    assert!(log.lines().next().unwrap().starts_with("iter=1 "));
    assert!(outs[0].join("checkpoint_000020.ply").is_file() && outs[0].join("checkpoint_000040.ply.meta").is_file());
    let meta = String::from_utf8(read(&outs[0], "checkpoint.ply.meta")).unwrap();
    assert!(meta.contains("iteration = 40\n") && meta.contains("seed = 3\n"), "{meta}");
    let metrics = String::from_utf8(read(&outs[0], "metrics.txt")).unwrap();
    assert!(metrics.contains("iteration=0 mean psnr=") && metrics.contains("iteration=40 mean psnr="));
}

#[test]
fn printed_config_reproduces_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.txt");
    let text = twister_cli::train_config(&twister_cli::GlobalArgs {
        seed: Some(9),
        threads: 0,
        verbose: 0,
        print_config: true,
        config: None,
        overrides: vec!["lambda=0.3".into(), "alpha_min=0".into()],
    })
    .unwrap()
    .to_text();
    std::fs::write(&cfg, &text).unwrap();
    let back = twister_cli::train_config(&twister_cli::GlobalArgs {
        seed: None,
        threads: 0,
        verbose: 0,
        print_config: true,
        config: Some(cfg.clone()),
        overrides: vec![],
    })
    .unwrap();
    assert_eq!(back.to_text(), text);
    assert_eq!(back.seed, 9);
    assert_eq!(run(&["--print-config", "--config", s(&cfg)]), EXIT_OK);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["--set", "no_such_key=1", "--print-config"]), EXIT_USAGE);
    assert_eq!(run(&["--set", "lambda"]), EXIT_USAGE);
    assert_eq!(run(&["train"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn prune_rules_and_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let gt_path = ds.join(GROUND_TRUTH_FILE);
    let out = tmp.path().join("p.ply");
    assert_eq!(run(&["prune", s(&gt_path), "--out", s(&out)]), EXIT_USAGE);
    assert_eq!(
        run(&["prune", s(&gt_path), "--out", s(&out), "--bounds", "off", "--no-support", "--no-opacity", "--no-knn"]),
        EXIT_OK
    );
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&gt_path).unwrap());
    assert!(tmp.path().join("p.ply.report").is_file());

    // planted floaters outside the box are exactly what automatic bounds remove
    let gt = read_splat_ply(&gt_path).unwrap();
    let d = load_dataset(&ds).unwrap();
    let aabb = auto_bounds(&d.train.points, 1.0, 0.25).unwrap();
    let planted = plant_floaters(&gt, &d.train, &aabb, 30, 0, 5).unwrap();
    let planted_path = tmp.path().join("planted.ply");
    write_splat_ply(&planted.cloud, &planted_path).unwrap();
    let code = run(&[
        "prune",
        s(&planted_path),
        "--out",
        s(&out),
        "--dataset",
        s(&ds),
        "--no-support",
        "--no-opacity",
        "--no-knn",
    ]);
    assert_eq!(code, EXIT_OK);
    let pruned = read_splat_ply(&out).unwrap();
    assert_eq!(pruned.len(), gt.len());

    // a box that excludes everything
    let code = run(&[
        "prune", s(&gt_path), "--out", s(&out), "--bounds", "9,9,9,10,10,10", "--no-support", "--no-opacity", "--no-knn",
    ]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn render_orbit_and_dataset_poses() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let gt_path = ds.join(GROUND_TRUTH_FILE);
    let orbit = tmp.path().join("orbit");
    assert_eq!(run(&["render", s(&gt_path), "--out", s(&orbit), "--orbit", "3", "--width", "24", "--height", "20"]), EXIT_OK);
    assert_eq!(std::fs::read_dir(&orbit).unwrap().count(), 3);

    let empty = tmp.path().join("empty.ply");
    write_splat_ply(&SplatCloud::empty(), &empty).unwrap();
    let eo = tmp.path().join("eo");
    assert_eq!(run(&["render", s(&empty), "--out", s(&eo), "--orbit", "2", "--width", "8", "--height", "8"]), EXIT_OK);
    let img = read_image(&eo.join("orbit_000.ppm")).unwrap();
    assert!(img.pixels.iter().all(|&v| v == 0.0));

    // dataset pose goes through the same renderer as training and eval
    let views = tmp.path().join("views");
    let code = run(&["render", s(&gt_path), "--out", s(&views), "--dataset", s(&ds), "--views", "cam_01.ppm", "--format", "png"]);
    assert_eq!(code, EXIT_OK);
    let bundle = parse_colmap_dir(&ds).unwrap();
    let v = bundle.view_index("cam_01.ppm").unwrap();
    let cloud = read_splat_ply(&gt_path).unwrap();
    let direct = render(&cloud, &bundle.camera(v), [0.0; 3], &Default::default()).color;
    let quantized: Vec<f64> = direct.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect();
    assert_eq!(read_image(&views.join("cam_01.png")).unwrap().pixels, quantized);

    assert_eq!(run(&["render", s(&gt_path), "--out", s(&views)]), EXIT_USAGE);
    assert_eq!(run(&["render", s(&gt_path), "--out", s(&views), "--dataset", s(&ds), "--views", "nope.ppm"]), EXIT_USAGE);
}

#[test]
fn eval_and_info() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path());
    let gt_path = ds.join(GROUND_TRUTH_FILE);
    let table = tmp.path().join("eval.txt");
    assert_eq!(run(&["eval", s(&gt_path), s(&ds), "--out", s(&table)]), EXIT_OK);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("view=cam_08.ppm psnr=100.0000"), "{text}");
    assert_eq!(run(&["eval", s(&gt_path), s(&ds), "--views", "0,cam_03.ppm", "--out", s(&table)]), EXIT_OK);
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 3);
    assert_eq!(run(&["eval", s(&gt_path), s(&ds), "--views", "12"]), EXIT_USAGE);
    assert_eq!(run(&["info", s(&gt_path)]), EXIT_OK);
    assert_eq!(run(&["info", s(&tmp.path().join("missing.ply"))]), EXIT_RUNTIME);
}
