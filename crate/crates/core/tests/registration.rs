mod common;

use nalgebra::Point3;
use scanvol::pipeline::{align_pair, feature_correspondences, render_scan, view_cloud, AlignParams, CloudParams};
use scanvol::registration::{detect_and_describe, merge_views, transform_cloud, DetectorParams};
use scanvol::synth::{Primitive, SceneConfig};
use scanvol::{OrientedPointCloud, RigidMotion};

use common::box_scene;

#[test]
fn textured_render_has_keypoints() {
    let scan = render_scan(&box_scene([0.1, 0.1, 0.126], 20.0, 0.0, 0)).unwrap();
    let feats = detect_and_describe(scan.views[0].gray.as_ref().unwrap(), &DetectorParams::default());
    assert!(feats.len() >= 50, "{} keypoints", feats.len());
}

#[test]
fn neighboring_ring_views_align_from_features() {
    let scan = render_scan(&box_scene([0.15, 0.12, 0.1], 30.0, 0.0, 0)).unwrap();
    let k = &scan.intrinsics;
    let clouds: Vec<OrientedPointCloud> = scan.views[..2]
        .iter()
        .map(|v| view_cloud(&v.depth, k, &CloudParams::default()).unwrap())
        .collect();
    let det = DetectorParams::default();
    let f: Vec<_> = scan.views[..2]
        .iter()
        .map(|v| detect_and_describe(v.gray.as_ref().unwrap(), &det))
        .collect();
    let params = AlignParams::default();
    let corrs = feature_correspondences(&f[0], &f[1], &scan.views[0].depth, &scan.views[1].depth, k, params.max_descriptor_distance);
    assert!(corrs.len() >= 30, "{} matches", corrs.len());
    let (pose, inliers, _, res) = align_pair(&corrs, &clouds[0], &clouds[1], &RigidMotion::identity(), &params).unwrap();
    let truth = scan.views[0].pose.unwrap().inverse().compose(&scan.views[1].pose.unwrap());
    assert!(inliers >= params.min_inliers);
    assert!(pose.rotation_angle_to(&truth).to_degrees() < 0.5);
    assert!(pose.translation_distance_to(&truth) < 0.005);
    let (before, after) = res.unwrap();
    assert!(after <= before);
}

#[test]
fn opposing_half_spheres_merge_tighter_than_one_view() {
    let center = Point3::new(0.0, 0.0, 0.2);
    let radius = 0.1;
    let mut cfg = SceneConfig::with_primitives(vec![Primitive::sphere(center, radius).unwrap()]).unwrap();
    cfg.scene.ground = None;
    cfg.ring.count = 2;
    cfg.ring.elevation = 0.0;
    cfg.noise_sigma = 0.002;
    cfg.seed = 11;
    let scan = render_scan(&cfg).unwrap();
    let rms = |c: &OrientedPointCloud| {
        (c.points.iter().map(|p| ((p - center).norm() - radius).powi(2)).sum::<f64>() / c.len() as f64).sqrt()
    };
    let views: Vec<_> = scan
        .views
        .iter()
        .map(|v| (view_cloud(&v.depth, &scan.intrinsics, &CloudParams::default()).unwrap(), v.pose.unwrap()))
        .collect();
    let single = rms(&transform_cloud(&views[0].0, &views[0].1));
    let merged = merge_views(&views, None);
    assert_eq!(merged.len(), views[0].0.len() + views[1].0.len());
    assert!(rms(&merged) < 2.0 * single, "{} vs {}", rms(&merged), single);
    // the two halves cover opposite sides
    let back = merged.points.iter().filter(|p| p.x < center.x - 0.05).count();
    let front = merged.points.iter().filter(|p| p.x > center.x + 0.05).count();
    assert!(back > 1000 && front > 1000);
}
