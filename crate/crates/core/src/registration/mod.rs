//! Rigid alignment of views: keypoint matching, RANSAC over three-match
//! Procrustes hypotheses, ICP refinement, and merging into one world frame.

mod features;
mod icp;
mod kdtree;
mod matching;
mod merge;
mod motion;
mod procrustes;
mod ransac;

pub use features::{detect_and_describe, DetectorParams, Feature, Keypoint, DESCRIPTOR_LEN};
pub use icp::{icp_refine, IcpParams, IcpResult};
pub use kdtree::KdTree;
pub use matching::match_forward_backward;
pub use merge::{merge_views, transform_cloud};
pub use motion::RigidMotion;
pub use procrustes::{procrustes_residual, solve_rigid_procrustes};
pub use ransac::{ransac_align, Correspondence, Hypothesis, RansacParams, RansacResult};

use nalgebra::Point2;

use crate::rgbd::{CameraIntrinsics, DepthImage};

/// Builds correspondences from pixel matches, dropping matches whose pixel
/// has no valid depth in either view. Pixel positions are rounded to the
/// nearest depth sample.
pub fn backproject_matches(
    matches: &[(usize, usize, Point2<f64>, Point2<f64>)],
    depth0: &DepthImage,
    depth1: &DepthImage,
    k: &CameraIntrinsics,
) -> Vec<Correspondence> {
    let lookup = |d: &DepthImage, p: &Point2<f64>| {
        let (u, v) = (p.x.round(), p.y.round());
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let z = d.get(u as usize, v as usize)?;
        k.backproject(p.x, p.y, z).ok()
    };
    matches
        .iter()
        .filter_map(|&(i, j, p0, p1)| {
            Some(Correspondence {
                i,
                j,
                p0,
                p1,
                x0: lookup(depth0, &p0)?,
                x1: lookup(depth1, &p1)?,
            })
        })
        .collect()
}
