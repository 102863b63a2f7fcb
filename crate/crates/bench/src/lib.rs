//! Shared fixtures for the benchmarks.

use twister_core::camera::{CameraIntrinsics, CameraPose};
use twister_core::synth::{generate_rig, generate_scene, reference_settings, RigSpec, VortexSpec};
use twister_core::{Camera, ImageBuffer, SplatCloud};

/// The default vortex scene and the first ring camera.
pub struct Fixture {
    pub cloud: SplatCloud,
    pub camera: Camera,
    pub target: ImageBuffer,
}

impl Fixture {
    pub fn vortex(size: usize) -> Self {
        let cloud = generate_scene(&VortexSpec::default()).expect("default spec is valid");
        let rig = RigSpec {
            width: size,
            height: size,
            focal: 1.25 * size as f64,
            ..RigSpec::default()
        };
        let (intr, poses) = generate_rig(&rig).expect("default rig is valid");
        let camera = Camera::new(&intr[&poses[0].camera_id], &poses[0]);
        let target = twister_core::render::render(&cloud, &camera, [0.0; 3], &reference_settings()).color;
        Self { cloud, camera, target }
    }
}

/// A single pinhole camera looking at the origin from `distance` along -z.
pub fn axis_camera(size: usize, distance: f64) -> Camera {
    let intr = CameraIntrinsics::pinhole(1, size, size, size as f64);
    let pose = CameraPose::look_at(
        1,
        1,
        "bench",
        nalgebra::Vector3::new(0.0, 0.0, -distance),
        nalgebra::Vector3::zeros(),
        nalgebra::Vector3::y(),
    );
    Camera::new(&intr, &pose)
}
