#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twister_core::splat::{SH_COEFFS, SH_REST};
use twister_core::{Camera, CameraIntrinsics, CameraPose, SplatCloud, SplatParams};

pub fn camera(width: usize, height: usize, focal: f64, eye: [f64; 3]) -> Camera {
    let intr = CameraIntrinsics::pinhole(1, width, height, focal);
    let pose = CameraPose::look_at(
        1,
        1,
        "view",
        Vector3::from(eye),
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
    );
    Camera::new(&intr, &pose)
}

/// `n` Gaussians scattered in a ball of radius `spread` around the origin
/// with random orientation, anisotropic scale, opacity and SH color.
pub fn random_cloud(n: usize, seed: u64, spread: f64, degree: usize) -> SplatCloud {
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
    let _ = SH_COEFFS;
    SplatCloud::new(p, degree)
}
