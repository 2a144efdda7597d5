//! Ground-truth fixtures: analytic primitives ray cast into depth and
//! intensity images from known camera poses.

mod config;
mod noise;

pub use config::{parse_scene_config, Ring, SceneConfig};
pub use noise::{corrupt_correspondences, corrupt_depth};

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::registration::RigidMotion;
use crate::rgbd::{CameraIntrinsics, DepthImage, GrayImage};
use crate::volume::Plane;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Full side lengths along the local axes, centered at the local origin.
    Box { extents: Vector3<f64> },
    /// Axis along local `z`, centered at the local origin.
    Cylinder { radius: f64, height: f64 },
}

/// A shape placed in the world by `pose` (local to world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: RigidMotion,
}

impl Primitive {
    pub fn new(shape: Shape, pose: RigidMotion) -> Result<Self> {
        let ok = match shape {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Box { extents } => extents.iter().all(|&e| e > 0.0),
            Shape::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "primitive sizes must be positive: {shape:?}"
            )));
        }
        Ok(Self { shape, pose })
    }

    pub fn sphere(center: Point3<f64>, radius: f64) -> Result<Self> {
        Self::new(
            Shape::Sphere { radius },
            RigidMotion::from_translation(center.coords),
        )
    }

    /// Box standing on `z = 0`, its footprint centered at `(x, y)` and turned
    /// by `yaw` radians about `z`.
    pub fn box_on_ground(extents: Vector3<f64>, x: f64, y: f64, yaw: f64) -> Result<Self> {
        let pose =
            RigidMotion::from_axis_angle(&Vector3::z(), yaw, Vector3::new(x, y, extents.z / 2.0));
        Self::new(Shape::Box { extents }, pose)
    }

    /// Upright cylinder standing on `z = 0`.
    pub fn cylinder_on_ground(radius: f64, height: f64, x: f64, y: f64) -> Result<Self> {
        Self::new(
            Shape::Cylinder { radius, height },
            RigidMotion::from_translation(Vector3::new(x, y, height / 2.0)),
        )
    }

    /// Distance along the unit-speed ray to the first hit in front of the
    /// origin, if any.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose.inverse();
        let o = inv.apply_point(origin);
        let d = inv.apply_vector(dir);
        match self.shape {
            Shape::Sphere { radius } => {
                let b = o.coords.dot(&d);
                let c = o.coords.norm_squared() - radius * radius;
                let a = d.norm_squared();
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > 0.0)
            }
            Shape::Box { extents } => {
                let half = extents / 2.0;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if d[a] == 0.0 {
                        if o[a].abs() > half[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut lo, mut hi) = ((-half[a] - o[a]) / d[a], (half[a] - o[a]) / d[a]);
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    t0 = t0.max(lo);
                    t1 = t1.min(hi);
                }
                if t0 > t1 {
                    return None;
                }
                [t0, t1].into_iter().find(|&t| t > 0.0)
            }
            Shape::Cylinder { radius, height } => {
                let half = height / 2.0;
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > 0.0 && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 0.0 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            if (o.z + t * d.z).abs() <= half {
                                consider(t);
                            }
                        }
                    }
                }
                if d.z != 0.0 {
                    for cap in [-half, half] {
                        let t = (cap - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Lowest world `z` of the primitive.
    pub fn min_z(&self) -> f64 {
        let r: Matrix3<f64> = self.pose.rotation;
        let c = self.pose.translation.z;
        match self.shape {
            Shape::Sphere { radius } => c - radius,
            Shape::Box { extents } => {
                let half = extents / 2.0;
                c - (0..3).map(|a| (r[(2, a)] * half[a]).abs()).sum::<f64>()
            }
            Shape::Cylinder { radius, height } => {
                let az = r[(2, 2)];
                c - height / 2.0 * az.abs() - radius * (1.0 - az * az).max(0.0).sqrt()
            }
        }
    }

    /// Whether `p` is inside or on the primitive.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let q = self.pose.inverse().apply_point(p);
        match self.shape {
            Shape::Sphere { radius } => q.coords.norm() <= radius,
            Shape::Box { extents } => (0..3).all(|a| q[a].abs() <= extents[a] / 2.0),
            Shape::Cylinder { radius, height } => {
                q.x * q.x + q.y * q.y <= radius * radius && q.z.abs() <= height / 2.0
            }
        }
    }

    /// Distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        let q = self.pose.inverse().apply_point(p);
        match self.shape {
            Shape::Sphere { radius } => (q.coords.norm() - radius).abs(),
            Shape::Box { extents } => {
                let d = q.coords.abs() - extents / 2.0;
                let outside = d.map(|x| x.max(0.0)).norm();
                let inside = d.max().min(0.0);
                (outside + inside).abs()
            }
            Shape::Cylinder { radius, height } => {
                let dr = (q.x * q.x + q.y * q.y).sqrt() - radius;
                let dz = q.z.abs() - height / 2.0;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                (outside + dr.max(dz).min(0.0)).abs()
            }
        }
    }
}

/// Closed-form enclosed volume.
pub fn analytic_volume(p: &Primitive) -> f64 {
    match p.shape {
        Shape::Sphere { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        Shape::Box { extents } => extents.x * extents.y * extents.z,
        Shape::Cylinder { radius, height } => std::f64::consts::PI * radius * radius * height,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Flat(f32),
    /// Unit-contrast 3D checkerboard with the given cell size in meters.
    Checker { cell: f64 },
    /// Smooth lattice noise with the given feature size in meters, contrast
    /// stretched to roughly fill `[0, 1]`.
    ValueNoise { scale: f64, seed: u64 },
}

impl Default for Texture {
    fn default() -> Self {
        Texture::ValueNoise {
            scale: 0.01,
            seed: 0,
        }
    }
}

impl Texture {
    pub fn sample(&self, p: &Point3<f64>) -> f32 {
        match *self {
            Texture::Flat(v) => v,
            Texture::Checker { cell } => {
                let s: i64 = (0..3).map(|a| (p[a] / cell).floor() as i64).sum();
                if s.rem_euclid(2) == 0 {
                    0.9
                } else {
                    0.1
                }
            }
            Texture::ValueNoise { scale, seed } => {
                let q = p.coords / scale;
                let v = 0.65 * value_noise(&q, seed) + 0.35 * value_noise(&(q * 2.0), seed ^ 0x9e37);
                // stretch the central band for high contrast
                (0.5 + 2.2 * (v - 0.5)).clamp(0.0, 1.0) as f32
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64(ix as u64 ^ splitmix64(iy as u64 ^ splitmix64(iz as u64))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(q: &Vector3<f64>, seed: u64) -> f64 {
    let base = q.map(f64::floor);
    let f = q - base;
    let s = f.map(|t| t * t * (3.0 - 2.0 * t));
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let mut acc = 0.0;
    for c in 0..8 {
        let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let w = (if dx == 1 { s.x } else { 1.0 - s.x })
            * (if dy == 1 { s.y } else { 1.0 - s.y })
            * (if dz == 1 { s.z } else { 1.0 - s.z });
        acc += w * lattice(ix + dx as i64, iy + dy as i64, iz + dz as i64, seed);
    }
    acc
}

/// Square ground patch in the plane `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ground {
    /// Half side length of the patch; `None` for an unbounded plane.
    pub half_extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub ground: Option<Ground>,
    pub texture: Texture,
}

impl Scene {
    /// Checks that no primitive reaches below the ground.
    pub fn new(primitives: Vec<Primitive>, ground: Option<Ground>, texture: Texture) -> Result<Self> {
        if ground.is_some() {
            for p in &primitives {
                if p.min_z() < -1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "primitive reaches below the ground plane (min z {:.4})",
                        p.min_z()
                    )));
                }
            }
        }
        Ok(Self {
            primitives,
            ground,
            texture,
        })
    }

    pub fn ground_plane(&self) -> Option<Plane> {
        self.ground.map(|_| Plane::ground())
    }

    pub fn total_volume(&self) -> f64 {
        self.primitives.iter().map(analytic_volume).sum()
    }

    /// Nearest hit along the ray and whether it is on a primitive.
    pub fn cast(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, bool)> {
        let mut best: Option<(f64, bool)> = None;
        for p in &self.primitives {
            if let Some(t) = p.intersect(origin, dir) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, true));
                }
            }
        }
        if let Some(g) = self.ground {
            if dir.z != 0.0 {
                let t = -origin.z / dir.z;
                let hit = origin + dir * t;
                let inside = g
                    .half_extent
                    .is_none_or(|e| hit.x.abs() <= e && hit.y.abs() <= e);
                if t > 0.0 && inside && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, false));
                }
            }
        }
        best
    }
}

/// Ray casts the scene from a camera with pose `camera` (camera to world;
/// `+z` forward, `+y` down). Depth is the camera-frame `z` of the nearest hit;
/// pixels that miss everything are invalid and black.
pub fn render_depth(
    scene: &Scene,
    camera: &RigidMotion,
    k: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> (DepthImage, GrayImage) {
    let eye = Point3::from(camera.translation);
    let rows: Vec<(Vec<f64>, Vec<f32>)> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut depth = vec![0.0; width];
            let mut gray = vec![0.0f32; width];
            for u in 0..width {
                let d_cam = Vector3::new((u as f64 - k.cu) / k.fu, (v as f64 - k.cv) / k.fv, 1.0);
                let d = camera.rotation * d_cam;
                if let Some((t, _)) = scene.cast(&eye, &d) {
                    depth[u] = t;
                    gray[u] = scene.texture.sample(&(eye + d * t));
                }
            }
            (depth, gray)
        })
        .collect();
    let mut depth = Vec::with_capacity(width * height);
    let mut gray = Vec::with_capacity(width * height);
    for (d, g) in rows {
        depth.extend(d);
        gray.extend(g);
    }
    (
        DepthImage::from_depths(width, height, depth).expect("buffer matches image size"),
        GrayImage {
            width,
            height,
            data: gray,
        },
    )
}

/// Camera-to-world pose at `eye` looking at `target`, with world `+z` up in
/// the image.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>) -> Result<RigidMotion> {
    let forward = target - eye;
    if forward.norm() == 0.0 {
        return Err(Error::InvalidParameter("camera eye equals target".into()));
    }
    let z = forward.normalize();
    let right = z.cross(&Vector3::z());
    if right.norm() < 1e-9 {
        return Err(Error::InvalidParameter("camera looks straight up or down".into()));
    }
    let x = right.normalize();
    let y = z.cross(&x);
    RigidMotion::new(Matrix3::from_columns(&[x, y, z]), eye.coords)
}

/// `count` cameras evenly spaced on a horizontal circle of `radius` around
/// `target`, raised by `elevation` radians, all looking at `target`.
pub fn camera_ring(
    count: usize,
    radius: f64,
    elevation: f64,
    target: Point3<f64>,
) -> Result<Vec<RigidMotion>> {
    (0..count)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let eye = target
                + Vector3::new(
                    radius * elevation.cos() * az.cos(),
                    radius * elevation.cos() * az.sin(),
                    radius * elevation.sin(),
                );
            look_at(eye, target)
        })
        .collect()
}
