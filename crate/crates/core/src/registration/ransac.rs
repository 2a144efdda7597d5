use nalgebra::{Point2, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{solve_rigid_procrustes, RigidMotion};
use crate::error::{Error, Result};

/// A putative match between keypoint `i` of view 0 and keypoint `j` of view 1,
/// with pixel positions and backprojected camera-frame points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub i: usize,
    pub j: usize,
    pub p0: Point2<f64>,
    pub p1: Point2<f64>,
    pub x0: Point3<f64>,
    pub x1: Point3<f64>,
}

impl Correspondence {
    pub fn residual(&self, g: &RigidMotion) -> f64 {
        (self.x0 - g.apply_point(&self.x1)).norm()
    }
}

/// Three distinct correspondence indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hypothesis(pub [usize; 3]);

impl Hypothesis {
    /// Draws three distinct indices below `n` (requires `n >= 3`).
    pub fn draw(rng: &mut impl Rng, n: usize) -> Self {
        debug_assert!(n >= 3);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut c = rng.random_range(0..n - 2);
        if c >= lo {
            c += 1;
        }
        if c >= hi {
            c += 1;
        }
        Hypothesis([a, b, c])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier distance in meters.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.005,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacResult {
    pub motion: RigidMotion,
    /// Inliers of the winning hypothesis, ascending.
    pub inliers: Vec<usize>,
    /// Index of the iteration that produced the winning hypothesis.
    pub winning_iteration: usize,
}

struct Score {
    iteration: usize,
    inliers: Vec<usize>,
    residual: f64,
}

/// Seeded RANSAC over three-match Procrustes hypotheses.
///
/// Hypotheses are drawn sequentially from a seeded generator and scored in
/// parallel; the winner is the one with most inliers, then lowest summed
/// inlier residual, then lowest iteration index. The returned motion is refit
/// on the winner's inlier set.
pub fn ransac_align(corrs: &[Correspondence], params: &RansacParams) -> Result<RansacResult> {
    if corrs.len() < 3 {
        return Err(Error::Arity {
            required: 3,
            got: corrs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let hypotheses: Vec<Hypothesis> = (0..params.iterations)
        .map(|_| Hypothesis::draw(&mut rng, corrs.len()))
        .collect();

    let best = hypotheses
        .par_iter()
        .enumerate()
        .filter_map(|(iteration, h)| {
            let sample: Vec<_> = h.0.iter().map(|&k| (corrs[k].x0, corrs[k].x1)).collect();
            let g = solve_rigid_procrustes(&sample).ok()?;
            let mut inliers = Vec::new();
            let mut residual = 0.0;
            for (k, c) in corrs.iter().enumerate() {
                let r = c.residual(&g);
                if r <= params.inlier_threshold {
                    inliers.push(k);
                    residual += r;
                }
            }
            Some(Score {
                iteration,
                inliers,
                residual,
            })
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a });

    let best = match best {
        Some(s) if s.inliers.len() >= 3 => s,
        Some(s) => {
            return Err(Error::AlignmentFailed(format!(
                "best hypothesis has only {} inliers",
                s.inliers.len()
            )))
        }
        None => {
            return Err(Error::AlignmentFailed(
                "every sampled triple was degenerate".into(),
            ))
        }
    };

    let pairs: Vec<_> = best.inliers.iter().map(|&k| (corrs[k].x0, corrs[k].x1)).collect();
    let motion = solve_rigid_procrustes(&pairs)?;
    Ok(RansacResult {
        motion,
        inliers: best.inliers,
        winning_iteration: best.iteration,
    })
}

/// Total order on scores, independent of evaluation order.
fn better(a: &Score, b: &Score) -> bool {
    use std::cmp::Ordering::*;
    match a.inliers.len().cmp(&b.inliers.len()) {
        Greater => true,
        Less => false,
        Equal => match a.residual.total_cmp(&b.residual) {
            Less => true,
            Greater => false,
            Equal => a.iteration < b.iteration,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn corr(x0: Point3<f64>, x1: Point3<f64>) -> Correspondence {
        Correspondence {
            i: 0,
            j: 0,
            p0: Point2::origin(),
            p1: Point2::origin(),
            x0,
            x1,
        }
    }

    #[test]
    fn hypotheses_are_distinct_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 3..12 {
            for _ in 0..200 {
                let Hypothesis([a, b, c]) = Hypothesis::draw(&mut rng, n);
                assert!(a != b && b != c && a != c);
                assert!(a < n && b < n && c < n);
            }
        }
    }

    #[test]
    fn minimal_exact_sample() {
        let g = RigidMotion::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(0.1, 0.2, 0.3));
        let pts = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.3, 0.0, 1.2),
            Point3::new(0.0, 0.4, 0.9),
        ];
        let corrs: Vec<_> = pts.iter().map(|p| corr(g.apply_point(p), *p)).collect();
        let res = ransac_align(&corrs, &RansacParams { iterations: 10, ..Default::default() }).unwrap();
        assert_eq!(res.inliers, vec![0, 1, 2]);
        assert!((res.motion.rotation - g.rotation).norm() < 1e-9);
    }

    #[test]
    fn too_few_correspondences() {
        let p = Point3::origin();
        assert!(matches!(
            ransac_align(&[corr(p, p), corr(p, p)], &RansacParams::default()),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn no_consensus_fails() {
        // three matches that no rigid motion explains
        let corrs = vec![
            corr(Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)),
            corr(Point3::new(1.0, 0.0, 0.0), Point3::new(5.0, 0.0, 0.0)),
            corr(Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.1, 0.0)),
        ];
        let err = ransac_align(&corrs, &RansacParams { iterations: 20, inlier_threshold: 1e-3, seed: 1 })
            .unwrap_err();
        assert!(matches!(err, Error::AlignmentFailed(_)));
    }
}
