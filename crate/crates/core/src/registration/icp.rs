use nalgebra::Point3;
use rayon::prelude::*;

use super::{solve_rigid_procrustes, KdTree, RigidMotion};
use crate::error::{Error, Result};
use crate::rgbd::OrientedPointCloud;

#[derive(Debug, Clone, Copy)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the residual changes by less than this (meters).
    pub convergence_eps: f64,
    /// Pairs farther apart than `cutoff_factor x median pair distance` are
    /// rejected in each iteration.
    pub cutoff_factor: f64,
    /// Pairs farther apart than this (meters) are always rejected.
    pub max_pair_distance: f64,
    /// Source points beyond this count are subsampled with a fixed stride.
    pub max_source_points: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-7,
            cutoff_factor: 3.0,
            max_pair_distance: f64::INFINITY,
            max_source_points: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub motion: RigidMotion,
    /// Residual of the initial motion followed by one entry per accepted
    /// iteration; non-increasing.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl IcpResult {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }
}

/// Point-to-point ICP refining `init` so that `init(source)` fits `target`.
///
/// The residual tracked across iterations is the RMS closest-point distance
/// over the (subsampled) source points, each squared distance truncated at
/// the cutoff in force at the first iteration. A step that would increase it
/// is not taken and the iteration stops, so the residual sequence is
/// non-increasing.
pub fn icp_refine(
    source: &OrientedPointCloud,
    target: &OrientedPointCloud,
    init: &RigidMotion,
    params: &IcpParams,
) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&target.points);
    let stride = source.len().div_ceil(params.max_source_points.max(1)).max(1);
    let src: Vec<Point3<f64>> = source.points.iter().step_by(stride).copied().collect();

    let mut motion = *init;
    let mut pairs = closest_pairs(&tree, &src, &motion);
    let truncation = (params.cutoff_factor * median(pairs.iter().map(|p| p.2).collect())).powi(2);
    let residual = |pairs: &[(usize, usize, f64)]| -> f64 {
        let sum: f64 = pairs.iter().map(|p| (p.2 * p.2).min(truncation)).sum();
        (sum / pairs.len() as f64).sqrt()
    };
    let mut residuals = vec![residual(&pairs)];
    let mut iterations = 0;

    while iterations < params.max_iterations {
        let cutoff = (params.cutoff_factor * median(pairs.iter().map(|p| p.2).collect()))
            .min(params.max_pair_distance);
        let kept: Vec<_> = pairs
            .iter()
            .filter(|p| p.2 <= cutoff)
            .map(|&(s, t, _)| (*tree.point(t), motion.apply_point(&src[s])))
            .collect();
        if kept.is_empty() {
            return Err(Error::IcpDiverged {
                iterations,
                last_motion: Box::new(motion),
            });
        }
        let step = match solve_rigid_procrustes(&kept) {
            Ok(step) => step,
            Err(Error::RankDeficient) | Err(Error::Arity { .. }) => break,
            Err(e) => return Err(e),
        };
        let candidate = step.compose(&motion).orthonormalized();
        let candidate_pairs = closest_pairs(&tree, &src, &candidate);
        let r = residual(&candidate_pairs);
        let previous = *residuals.last().unwrap();
        if r > previous {
            break;
        }
        motion = candidate;
        pairs = candidate_pairs;
        residuals.push(r);
        iterations += 1;
        if previous - r < params.convergence_eps {
            break;
        }
    }
    Ok(IcpResult {
        motion,
        residuals,
        iterations,
    })
}

fn closest_pairs(
    tree: &KdTree,
    src: &[Point3<f64>],
    motion: &RigidMotion,
) -> Vec<(usize, usize, f64)> {
    src.par_iter()
        .enumerate()
        .map(|(s, p)| {
            let (t, d2) = tree
                .nearest(&motion.apply_point(p))
                .expect("target is non-empty");
            (s, t, d2.sqrt())
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn cloud(points: Vec<Point3<f64>>) -> OrientedPointCloud {
        let normals = vec![Vector3::z(); points.len()];
        OrientedPointCloud::new(points, normals).unwrap()
    }

    fn asymmetric_blob() -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..10 {
                let (x, y) = (i as f64 * 0.01, j as f64 * 0.01);
                pts.push(Point3::new(x, y, 0.3 * x * x + 0.1 * y));
            }
        }
        pts.push(Point3::new(0.5, 0.0, 0.2));
        pts
    }

    #[test]
    fn identical_clouds_stay_at_identity() {
        let c = cloud(asymmetric_blob());
        let res = icp_refine(&c, &c, &RigidMotion::identity(), &IcpParams::default()).unwrap();
        assert_eq!(res.final_residual(), 0.0);
        assert!((res.motion.rotation - nalgebra::Matrix3::identity()).norm() < 1e-12);
        assert!(res.motion.translation.norm() < 1e-12);
    }

    #[test]
    fn gross_misalignment_is_still_monotone() {
        let target = cloud(asymmetric_blob());
        let init = RigidMotion::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2, Vector3::zeros());
        let res = icp_refine(&target, &target, &init, &IcpParams::default()).unwrap();
        for w in res.residuals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn all_pairs_rejected_reports_divergence() {
        let c = cloud(asymmetric_blob());
        let far = RigidMotion::from_translation(Vector3::new(10.0, 0.0, 0.0));
        let params = IcpParams {
            max_pair_distance: 0.1,
            ..IcpParams::default()
        };
        match icp_refine(&c, &c, &far, &params) {
            Err(Error::IcpDiverged { iterations, last_motion }) => {
                assert_eq!(iterations, 0);
                assert_eq!(*last_motion, far);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_rejected() {
        let c = cloud(asymmetric_blob());
        let e = OrientedPointCloud::default();
        assert!(icp_refine(&e, &c, &RigidMotion::identity(), &IcpParams::default()).is_err());
        assert!(icp_refine(&c, &e, &RigidMotion::identity(), &IcpParams::default()).is_err());
    }
}
