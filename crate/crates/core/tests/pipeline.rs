mod common;

use nalgebra::Point3;
use scanvol::pipeline::{load_scan, render_scan, run_pipeline, write_scan, AlignMode, PipelineConfig, Scan};
use scanvol::rgbd::GrayImage;
use scanvol::synth::{Primitive, SceneConfig};
use scanvol::{CameraIntrinsics, Error};

use common::box_scene;

fn shrink(cfg: &mut SceneConfig) {
    cfg.intrinsics = CameraIntrinsics::new(262.5, 262.5, 159.5, 119.5).unwrap();
    cfg.width = 320;
    cfg.height = 240;
}

fn quick_config() -> PipelineConfig {
    let mut c = PipelineConfig::new();
    c.align.mode = AlignMode::KnownPoses;
    c.object.reconstruct.grid_resolution = 64;
    c
}

fn small_box_scan() -> (Scan, f64) {
    let mut cfg = box_scene([0.1, 0.1, 0.126], 15.0, 0.0, 0);
    shrink(&mut cfg);
    (render_scan(&cfg).unwrap(), cfg.scene.total_volume())
}

#[test]
fn known_pose_box_volume() {
    let (scan, truth) = small_box_scan();
    let out = run_pipeline(&scan, &quick_config()).unwrap();
    let v = &out.report.volume;
    assert!(((v.volume - truth) / truth).abs() < 0.02, "{} vs {truth}", v.volume);
    assert!(!v.unreliable, "{:?}", v.warnings);
    assert!(v.boundary_edges > 0, "the mesh should be open at the support");
    assert!(v.support_gap.unwrap() < 1e-9);
    assert_eq!(out.poses.len(), 8);
}

#[test]
fn reruns_are_bit_identical() {
    let (scan, _) = small_box_scan();
    let mut cfg = quick_config();
    cfg.align.mode = AlignMode::Features;
    let a = run_pipeline(&scan, &cfg).unwrap();
    let b = run_pipeline(&scan, &cfg).unwrap();
    assert_eq!(a.report.volume.volume.to_bits(), b.report.volume.volume.to_bits());
    assert_eq!(a.report.volume.tetra_volume.to_bits(), b.report.volume.tetra_volume.to_bits());
    assert_eq!(a.object.mesh, b.object.mesh);
    assert_eq!(a.poses, b.poses);
    assert_eq!(a.report.cg_iterations, b.report.cg_iterations);
}

#[test]
fn single_view_sphere_is_flagged() {
    let mut cfg = SceneConfig::with_primitives(vec![Primitive::sphere(Point3::new(0.0, 0.0, 0.2), 0.1).unwrap()]).unwrap();
    cfg.scene.ground = None;
    cfg.ring.count = 1;
    shrink(&mut cfg);
    let scan = render_scan(&cfg).unwrap();
    let mut pc = quick_config();
    pc.use_ground = false;
    let out = run_pipeline(&scan, &pc).unwrap();
    assert!(!out.object.mesh.is_empty());
    assert!(out.report.unsupported_fraction > 0.15, "{}", out.report.unsupported_fraction);
    assert!(out.report.volume.unreliable);
    assert!(!out.report.volume.warnings.is_empty());
}

#[test]
fn scan_directory_round_trip() {
    let (scan, _) = small_box_scan();
    let dir = tempfile::tempdir().unwrap();
    write_scan(dir.path(), &scan).unwrap();
    let back = load_scan(dir.path()).unwrap();
    assert_eq!(back.views.len(), scan.views.len());
    assert_eq!(back.intrinsics, scan.intrinsics);
    for (a, b) in back.views.iter().zip(&scan.views) {
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.depth.valid_mask(), b.depth.valid_mask());
        for (x, y) in a.depth.data().iter().zip(b.depth.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        let (ga, gb) = (a.gray.as_ref().unwrap(), b.gray.as_ref().unwrap());
        assert!(ga.data.iter().zip(&gb.data).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-6));
    }
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_scan(dir.path()).is_err());
}

#[test]
fn untextured_view_names_the_failure() {
    let (mut scan, _) = small_box_scan();
    let v = &mut scan.views[3];
    let g = v.gray.as_ref().unwrap();
    v.gray = Some(GrayImage::filled(g.width, g.height, 0.5));
    // view 3 cannot be placed against any earlier view
    scan.views.truncate(4);
    let mut cfg = quick_config();
    cfg.align.mode = AlignMode::Features;
    match run_pipeline(&scan, &cfg) {
        Err(Error::AlignmentFailed(msg)) => assert!(msg.contains("view 3"), "{msg}"),
        other => panic!("expected an alignment failure, got {:?}", other.map(|o| o.report.volume.volume)),
    }
}
