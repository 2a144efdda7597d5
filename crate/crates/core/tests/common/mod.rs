#![allow(dead_code)]

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scanvol::synth::{Primitive, SceneConfig};
use scanvol::{OrientedPointCloud, RigidMotion};

/// Fibonacci-lattice samples of a sphere with outward normals.
pub fn sphere_cloud(center: Point3<f64>, radius: f64, n: usize) -> OrientedPointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let (points, normals) = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            let d = Vector3::new(r * th.cos(), r * th.sin(), z);
            (center + d * radius, d)
        })
        .unzip();
    OrientedPointCloud::new(points, normals).unwrap()
}

pub fn random_motion(rng: &mut ChaCha8Rng, max_angle: f64, max_shift: f64) -> RigidMotion {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(
        rng.random_range(-max_shift..max_shift),
        rng.random_range(-max_shift..max_shift),
        rng.random_range(-max_shift..max_shift),
    );
    RigidMotion::from_axis_angle(&axis, rng.random_range(-max_angle..max_angle), t)
}

/// A single box on the ground with the default ring, camera and texture.
pub fn box_scene(extents: [f64; 3], yaw_deg: f64, noise: f64, seed: u64) -> SceneConfig {
    let b = Primitive::box_on_ground(Vector3::from(extents), 0.0, 0.0, yaw_deg.to_radians()).unwrap();
    let mut cfg = SceneConfig::with_primitives(vec![b]).unwrap();
    cfg.noise_sigma = noise;
    cfg.seed = seed;
    cfg
}
