use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{camera_ring, Ground, Primitive, Scene, Texture};
use crate::error::{Error, Result};
use crate::registration::RigidMotion;
use crate::rgbd::CameraIntrinsics;

/// Camera ring around the scene's center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub count: usize,
    /// Distance from the target; `None` frames the scene automatically.
    pub radius: Option<f64>,
    /// Elevation above the horizontal, radians.
    pub elevation: f64,
}

impl Default for Ring {
    fn default() -> Self {
        Self {
            count: 8,
            radius: None,
            elevation: 30f64.to_radians(),
        }
    }
}

/// Everything needed to render a synthetic scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub scene: Scene,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    pub ring: Ring,
    /// Depth noise standard deviation, meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// A 640x480 camera with f = 525 px, an 8-view ring at 30 degrees
    /// elevation, a ground patch sized to the objects and value-noise
    /// texture at a tenth of the scene radius.
    pub fn with_primitives(primitives: Vec<Primitive>) -> Result<Self> {
        let mut cfg = Self {
            scene: Scene::new(primitives, None, Texture::Flat(0.5))?,
            intrinsics: CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5)?,
            width: 640,
            height: 480,
            ring: Ring::default(),
            noise_sigma: 0.0,
            seed: 0,
        };
        let r = cfg.bounding_radius();
        cfg.scene = Scene::new(
            cfg.scene.primitives,
            Some(Ground {
                half_extent: Some(3.0 * r),
            }),
            Texture::ValueNoise {
                scale: r / 10.0,
                seed: 0,
            },
        )?;
        Ok(cfg)
    }

    fn object_bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for p in &self.scene.primitives {
            let r = match p.shape {
                super::Shape::Sphere { radius } => radius,
                super::Shape::Box { extents } => extents.norm() / 2.0,
                super::Shape::Cylinder { radius, height } => radius.hypot(height / 2.0),
            };
            let c = Point3::from(p.pose.translation);
            lo = lo.inf(&(c - Vector3::repeat(r)));
            hi = hi.sup(&(c + Vector3::repeat(r)));
        }
        if self.scene.primitives.is_empty() {
            (Point3::origin(), Point3::origin())
        } else {
            (lo, hi)
        }
    }

    /// Center of the objects' bounding box.
    pub fn target(&self) -> Point3<f64> {
        let (lo, hi) = self.object_bounds();
        nalgebra::center(&lo, &hi)
    }

    /// Radius of a sphere around [`Self::target`] holding every object.
    pub fn bounding_radius(&self) -> f64 {
        let (lo, hi) = self.object_bounds();
        ((hi - lo).norm() / 2.0).max(1e-3)
    }

    /// Camera-to-world poses of the ring. Auto radius puts the scene's
    /// bounding sphere at about 30% of the image height.
    pub fn cameras(&self) -> Result<Vec<RigidMotion>> {
        let radius = self.ring.radius.unwrap_or_else(|| {
            self.intrinsics.fv * self.bounding_radius() / (0.3 * self.height as f64)
        });
        camera_ring(self.ring.count, radius, self.ring.elevation, self.target())
    }
}

/// Parses a scene description. One directive per line, `#` starts a comment:
///
/// ```text
/// intrinsics <fu> <fv> <cu> <cv> <width> <height>
/// box <w> <d> <h> <x> <y> [yaw_deg]        # resting on z = 0
/// cylinder <r> <h> <x> <y>                 # upright on z = 0
/// sphere <r> <x> <y> <z>
/// ground [half_extent | none]              # 'none' removes the ground
/// texture noise <scale> [seed] | checker <cell> | flat <value>
/// ring <count> [radius | auto] [elevation_deg]
/// noise <sigma>
/// seed <n>
/// ```
pub fn parse_scene_config(text: &str, path: &Path) -> Result<SceneConfig> {
    let mut primitives = Vec::new();
    let mut intrinsics = None;
    let mut ground: Option<Option<Ground>> = None;
    let mut texture = None;
    let mut ring = Ring::default();
    let mut noise = 0.0;
    let mut seed = 0;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(path, ln + 1, msg);
        let mut words = line.split_whitespace();
        let key = words.next().unwrap();
        let args: Vec<&str> = words.collect();
        let num = |i: usize| -> Result<f64> {
            let s = args
                .get(i)
                .ok_or_else(|| err(format!("'{key}' needs argument {}", i + 1)))?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("'{s}' is not a number")))
        };
        let count = |i: usize| -> Result<usize> {
            let s = args
                .get(i)
                .ok_or_else(|| err(format!("'{key}' needs argument {}", i + 1)))?;
            s.parse::<usize>()
                .map_err(|_| err(format!("'{s}' is not a count")))
        };
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if args.len() < lo || args.len() > hi {
                Err(err(format!("'{key}' takes {lo} to {hi} arguments, got {}", args.len())))
            } else {
                Ok(())
            }
        };
        let prim = |r: Result<Primitive>| r.map_err(|e| err(e.to_string()));
        match key {
            "intrinsics" => {
                arity(6, 6)?;
                let k = CameraIntrinsics::new(num(0)?, num(1)?, num(2)?, num(3)?)
                    .map_err(|e| err(e.to_string()))?;
                intrinsics = Some((k, count(4)?, count(5)?));
            }
            "box" => {
                arity(5, 6)?;
                let yaw = if args.len() == 6 { num(5)?.to_radians() } else { 0.0 };
                primitives.push(prim(Primitive::box_on_ground(
                    Vector3::new(num(0)?, num(1)?, num(2)?),
                    num(3)?,
                    num(4)?,
                    yaw,
                ))?);
            }
            "cylinder" => {
                arity(4, 4)?;
                primitives.push(prim(Primitive::cylinder_on_ground(num(0)?, num(1)?, num(2)?, num(3)?))?);
            }
            "sphere" => {
                arity(4, 4)?;
                primitives.push(prim(Primitive::sphere(Point3::new(num(1)?, num(2)?, num(3)?), num(0)?))?);
            }
            "ground" => {
                arity(0, 1)?;
                ground = Some(match args.first() {
                    None => Some(Ground { half_extent: None }),
                    Some(&"none") => None,
                    Some(_) => Some(Ground {
                        half_extent: Some(num(0)?),
                    }),
                });
            }
            "texture" => {
                let kind = args.first().copied().unwrap_or("");
                texture = Some(match kind {
                    "noise" => {
                        arity(2, 3)?;
                        let seed = if args.len() == 3 { count(2)? as u64 } else { 0 };
                        Texture::ValueNoise {
                            scale: num(1)?,
                            seed,
                        }
                    }
                    "checker" => {
                        arity(2, 2)?;
                        Texture::Checker { cell: num(1)? }
                    }
                    "flat" => {
                        arity(2, 2)?;
                        Texture::Flat(num(1)? as f32)
                    }
                    other => return Err(err(format!("unknown texture '{other}'"))),
                });
            }
            "ring" => {
                arity(1, 3)?;
                ring.count = count(0)?;
                if ring.count == 0 {
                    return Err(err("ring needs at least one camera".into()));
                }
                ring.radius = match args.get(1) {
                    None | Some(&"auto") => None,
                    Some(_) => Some(num(1)?),
                };
                if args.len() == 3 {
                    ring.elevation = num(2)?.to_radians();
                }
            }
            "noise" => {
                arity(1, 1)?;
                noise = num(0)?;
                if noise < 0.0 {
                    return Err(err("noise must be non-negative".into()));
                }
            }
            "seed" => {
                arity(1, 1)?;
                seed = count(0)? as u64;
            }
            other => return Err(err(format!("unknown directive '{other}'"))),
        }
    }
    if primitives.is_empty() {
        return Err(Error::parse(path, 0, "scene has no primitives"));
    }
    let mut cfg = SceneConfig::with_primitives(primitives)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    if let Some((k, w, h)) = intrinsics {
        cfg.intrinsics = k;
        cfg.width = w;
        cfg.height = h;
    }
    if let Some(g) = ground {
        cfg.scene.ground = g;
    }
    if let Some(t) = texture {
        cfg.scene.texture = t;
    }
    cfg.ring = ring;
    cfg.noise_sigma = noise;
    cfg.seed = seed;
    Ok(cfg)
}
