use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::registration::{Hypothesis, RigidMotion};

/// The plane `{x : <normal, x> = offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// Normalizes `normal` and scales `offset` to match.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "plane normal {normal:?} offset {offset}"
            )));
        }
        Ok(Self {
            normal: normal / len,
            offset: offset / len,
        })
    }

    pub fn ground() -> Self {
        Self {
            normal: Vector3::z(),
            offset: 0.0,
        }
    }

    /// Plane through three points, `None` if they are collinear.
    pub fn through(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if n.norm() <= 1e-12 * scale || scale == 0.0 {
            return None;
        }
        let n = n.normalize();
        Some(Self {
            normal: n,
            offset: n.dot(&a.coords),
        })
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    /// Least-squares plane: through the centroid, normal along the smallest
    /// eigenvector of the scatter matrix.
    pub fn fit(points: &[Point3<f64>]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Arity {
                required: 3,
                got: points.len(),
            });
        }
        let centroid = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64;
        let mut scatter = Matrix3::zeros();
        for p in points {
            let d = p.coords - centroid;
            scatter += d * d.transpose();
        }
        let eig = SymmetricEigen::new(scatter);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
        let n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
        Ok(Self {
            normal: n,
            offset: n.dot(&centroid),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlaneParams {
    pub iterations: usize,
    /// Inlier distance in meters.
    pub distance_threshold: f64,
    pub seed: u64,
    /// Minimum fraction of points the winning plane must support.
    pub min_inlier_fraction: f64,
    /// Hypotheses are scored on at most this many points (evenly strided);
    /// the final refit uses all of them.
    pub max_score_points: usize,
}

impl Default for PlaneParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            distance_threshold: 0.005,
            seed: 0,
            min_inlier_fraction: 0.1,
            max_score_points: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Indices within the threshold of the refit plane, ascending.
    pub inliers: Vec<usize>,
}

/// Seeded RANSAC over point triplets, refit by least squares on the winner's
/// inliers. The normal points to the side holding most of the off-plane
/// points.
pub fn detect_ground_plane(points: &[Point3<f64>], params: &PlaneParams) -> Result<PlaneFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Arity { required: 3, got: n });
    }
    let stride = n.div_ceil(params.max_score_points.max(3));
    let scored: Vec<Point3<f64>> = points.iter().step_by(stride).copied().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let hypotheses: Vec<Hypothesis> = (0..params.iterations.max(1))
        .map(|_| Hypothesis::draw(&mut rng, n))
        .collect();
    let thr = params.distance_threshold;
    let best = hypotheses
        .par_iter()
        .enumerate()
        .filter_map(|(it, h)| {
            let [a, b, c] = h.0.map(|k| points[k]);
            let plane = Plane::through(&a, &b, &c)?;
            let mut count = 0usize;
            let mut residual = 0.0;
            for p in &scored {
                let d = plane.signed_distance(p).abs();
                if d <= thr {
                    count += 1;
                    residual += d;
                }
            }
            Some((count, residual, it, plane))
        })
        .reduce_with(|a, b| {
            let a_wins = a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)));
            if a_wins {
                a
            } else {
                b
            }
        })
        .ok_or_else(|| Error::NoPlane("every sampled triple was collinear".into()))?;

    let inliers_of = |plane: &Plane| -> Vec<usize> {
        (0..n)
            .filter(|&i| plane.signed_distance(&points[i]).abs() <= thr)
            .collect()
    };
    let mut plane = best.3;
    let mut inliers = inliers_of(&plane);
    if inliers.len() > 3 {
        let support: Vec<_> = inliers.iter().map(|&i| points[i]).collect();
        if let Ok(refit) = Plane::fit(&support) {
            let refit_inliers = inliers_of(&refit);
            if refit_inliers.len() >= 3 {
                plane = refit;
                inliers = refit_inliers;
            }
        }
    }
    let required = (params.min_inlier_fraction * n as f64).ceil() as usize;
    if inliers.len() < 3.max(required) {
        return Err(Error::NoPlane(format!(
            "best plane supports {} of {} points",
            inliers.len(),
            n
        )));
    }

    // orient toward the majority of off-plane points
    let (mut above, mut below) = (0usize, 0usize);
    for p in points {
        let d = plane.signed_distance(p);
        if d > thr {
            above += 1;
        } else if d < -thr {
            below += 1;
        }
    }
    if below > above || (below == above && canonical_sign(&plane.normal) < 0.0) {
        plane = plane.flipped();
    }
    Ok(PlaneFit { plane, inliers })
}

/// Sign of the last nonzero component, z first.
fn canonical_sign(n: &Vector3<f64>) -> f64 {
    for a in [2, 1, 0] {
        if n[a] != 0.0 {
            return n[a].signum();
        }
    }
    1.0
}

/// The rigid motion taking `plane` to `z = 0` with its normal on `+z`, using
/// the smallest rotation between the two normals.
pub fn support_motion(plane: &Plane) -> RigidMotion {
    let n = plane.normal;
    let z = Vector3::z();
    let c = n.dot(&z);
    let rotation = if c < -1.0 + 1e-12 {
        // antiparallel: half turn about x
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
    } else {
        // Rodrigues for the rotation taking n to z
        let v = n.cross(&z);
        let vx = v.cross_matrix();
        Matrix3::identity() + vx + vx * vx / (1.0 + c)
    };
    RigidMotion {
        rotation,
        translation: Vector3::new(0.0, 0.0, -plane.offset),
    }
    .orthonormalized()
}

/// Transforms the mesh so its support plane becomes `z = 0`.
pub fn align_support_to_plane(mesh: &TriangleMesh, plane: &Plane) -> (TriangleMesh, RigidMotion) {
    let g = support_motion(plane);
    (mesh.transformed(&g), g)
}
