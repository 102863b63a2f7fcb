mod common;

use common::{camera, random_cloud};
use proptest::prelude::*;
use twister_core::render::{composite, oracle_render, project, render};
use twister_core::splat::build_covariance;
use twister_core::{RenderSettings, SplatCloud};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn composite_matches_oracle_on_random_scenes() {
    let settings = RenderSettings::exact();
    for seed in 0..20u64 {
        let n = 5 + (seed as usize * 7) % 46;
        let cloud = random_cloud(n, 1000 + seed, 0.7, (seed % 4) as usize);
        let eye = [0.4 * (seed as f64).sin(), 0.3, -3.0];
        let cam = camera(40, 30, 36.0, eye);
        let bg = [0.2, 0.0, 0.7];
        let fast = render(&cloud, &cam, bg, &settings);
        let slow = oracle_render(&cloud, &cam, bg, &settings);
        let d = max_abs_diff(&fast.color.pixels, &slow.pixels);
        assert!(d < 1e-6, "seed {seed}: max diff {d}");
    }
}

#[test]
fn default_shortcuts_stay_close_to_oracle() {
    // Skipped faint blends and early termination are the only differences.
    let cloud = random_cloud(50, 77, 0.7, 2);
    let cam = camera(40, 30, 36.0, [0.1, 0.2, -3.0]);
    let fast = render(&cloud, &cam, [0.0; 3], &RenderSettings::default());
    let slow = oracle_render(&cloud, &cam, [0.0; 3], &RenderSettings::default());
    assert!(max_abs_diff(&fast.color.pixels, &slow.pixels) < 0.05);
}

#[test]
fn single_gaussian_matches_oracle_at_center() {
    let mut cloud = random_cloud(1, 5, 0.1, 0);
    cloud.params.positions[0] = [0.0; 3];
    let cam = camera(31, 31, 30.0, [0.0, 0.0, -3.0]);
    let s = RenderSettings::exact();
    let a = render(&cloud, &cam, [0.0; 3], &s);
    let b = oracle_render(&cloud, &cam, [0.0; 3], &s);
    assert!(max_abs_diff(&a.color.get(15, 15), &b.get(15, 15)) < 1e-12);
}

#[test]
fn empty_cloud_is_background_in_both() {
    let cam = camera(8, 8, 10.0, [0.0, 0.0, -3.0]);
    let bg = [0.3, 0.6, 0.9];
    let a = render(&SplatCloud::empty(), &cam, bg, &RenderSettings::default());
    let b = oracle_render(&SplatCloud::empty(), &cam, bg, &RenderSettings::default());
    assert!(a.color.pixels.chunks(3).all(|p| p == bg));
    assert_eq!(a.color, b);
    assert!(a.final_transmittance.iter().all(|&t| t == 1.0));
}

#[test]
fn covariance_is_symmetric_psd_over_a_million_draws() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1_000_000 {
        let s = [0; 3].map(|_| rng.gen_range(-6.0..2.0));
        let q = [0; 4].map(|_| rng.gen_range(-1.0..1.0));
        if q.iter().all(|v: &f64| v.abs() < 1e-9) {
            continue;
        }
        let c = build_covariance(s, q).unwrap();
        assert!((c - c.transpose()).abs().max() <= 1e-12);
        let scale = c.abs().max().max(1e-300);
        let eig = c.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-9 * scale.max(1.0)), "{eig:?}");
        let neg = build_covariance(s, q.map(|v| -v)).unwrap();
        assert_eq!(c, neg);
    }
}

fn scene_strategy() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transmittance_and_blend_bounds((seed, n) in scene_strategy()) {
        let cloud = random_cloud(n, seed, 0.7, 3);
        let cam = camera(24, 20, 24.0, [0.2, -0.2, -3.0]);
        let out = render(&cloud, &cam, [0.0; 3], &RenderSettings::default());
        prop_assert!(out.final_transmittance.iter().all(|&t| (0.0..=1.0).contains(&t)));
        prop_assert!(out.per_gaussian_max_blend.iter().all(|&b| (0.0..=0.99).contains(&b)));
        // black background: no channel exceeds the brightest projected color
        let proj = project(&cloud, &cam, &RenderSettings::default());
        let cmax = proj.iter().flat_map(|g| g.color).fold(0.0, f64::max);
        prop_assert!(out.color.pixels.iter().all(|&c| c >= 0.0 && c <= cmax + 1e-12));
    }

    #[test]
    fn permutation_invariance((seed, n) in scene_strategy(), shift in 1usize..40) {
        let cloud = random_cloud(n, seed, 0.7, 1);
        let cam = camera(24, 20, 24.0, [0.0, 0.1, -3.0]);
        let s = RenderSettings::default();
        let mut proj = project(&cloud, &cam, &s);
        let a = composite(proj.clone(), n, 24, 20, [0.1; 3], &s).unwrap();
        let k = shift % proj.len().max(1);
        proj.rotate_left(k);
        proj.reverse();
        let b = composite(proj, n, 24, 20, [0.1; 3], &s).unwrap();
        prop_assert_eq!(a.color, b.color);
    }

    #[test]
    fn transparent_cloud_renders_background((seed, n) in scene_strategy()) {
        let mut cloud = random_cloud(n, seed, 0.7, 3);
        cloud.params.opacity_logits.iter_mut().for_each(|o| *o = f64::NEG_INFINITY);
        let cam = camera(16, 16, 16.0, [0.0, 0.0, -3.0]);
        let bg = [0.25, 0.5, 0.75];
        let out = render(&cloud, &cam, bg, &RenderSettings::default());
        prop_assert!(out.color.pixels.chunks(3).all(|p| p == bg));
    }
}
