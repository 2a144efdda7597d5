//! End-to-end scan processing: per-view clouds, view alignment, merging,
//! ground detection, object reconstruction and volume.
//!
//! Each stage is a separate function so the command-line tool can run them
//! one at a time on files; [`run_pipeline`] chains the same functions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Point2, Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::poisson::{reconstruct, ReconstructParams, VoxelGrid};
use crate::registration::{
    backproject_matches, detect_and_describe, icp_refine, match_forward_backward, merge_views,
    ransac_align, transform_cloud, Correspondence, DetectorParams, Feature, IcpParams, KdTree,
    RansacParams, RigidMotion,
};
use crate::rgbd::{estimate_normals, smooth_depth, CameraIntrinsics, DepthImage, GrayImage, NormalParams, OrientedPointCloud};
use crate::synth::{corrupt_depth, render_depth, SceneConfig};
use crate::volume::{
    clip_below_ground, detect_ground_plane, estimate_volume, largest_component, support_motion,
    Plane, PlaneFit, PlaneParams, TriangleMesh, VolumeParams, VolumeReport,
};

/// One calibrated RGBD view.
#[derive(Debug, Clone)]
pub struct View {
    pub depth: DepthImage,
    pub gray: Option<GrayImage>,
    /// Camera-to-world pose, when known.
    pub pose: Option<RigidMotion>,
}

#[derive(Debug, Clone)]
pub struct Scan {
    pub intrinsics: CameraIntrinsics,
    pub views: Vec<View>,
}

fn view_path(dir: &Path, stem: &str, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{i:03}.{ext}"))
}

/// Writes `intrinsics.txt`, then `depth_NNN.pfm`, `depth_NNN.png`,
/// `gray_NNN.png` and `pose_NNN.txt` for every view.
pub fn write_scan(dir: &Path, scan: &Scan) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = scan.views.first().ok_or(Error::EmptyScan)?;
    io::write_intrinsics(
        &dir.join("intrinsics.txt"),
        &io::CameraFile {
            intrinsics: scan.intrinsics,
            width: first.depth.width(),
            height: first.depth.height(),
        },
    )?;
    for (i, v) in scan.views.iter().enumerate() {
        io::write_depth(&view_path(dir, "depth", i, "pfm"), &v.depth)?;
        io::write_depth(&view_path(dir, "depth", i, "png"), &v.depth)?;
        if let Some(g) = &v.gray {
            io::write_gray_png(&view_path(dir, "gray", i, "png"), g)?;
        }
        if let Some(p) = &v.pose {
            io::write_pose(&view_path(dir, "pose", i, "txt"), p)?;
        }
    }
    Ok(())
}

/// Reads a scan directory laid out as by [`write_scan`]. Views are numbered
/// from 0 without gaps; PFM depth is preferred over PNG. Gray images and
/// poses are optional per view.
pub fn load_scan(dir: &Path) -> Result<Scan> {
    let cam = io::read_intrinsics(&dir.join("intrinsics.txt"))?;
    let mut views = Vec::new();
    for i in 0.. {
        let pfm = view_path(dir, "depth", i, "pfm");
        let png = view_path(dir, "depth", i, "png");
        let depth = if pfm.exists() {
            io::read_depth(&pfm)?
        } else if png.exists() {
            io::read_depth(&png)?
        } else {
            break;
        };
        if depth.width() != cam.width || depth.height() != cam.height {
            return Err(Error::InvalidParameter(format!(
                "view {i} is {}x{}, intrinsics say {}x{}",
                depth.width(),
                depth.height(),
                cam.width,
                cam.height
            )));
        }
        let gray_path = view_path(dir, "gray", i, "png");
        let gray = if gray_path.exists() { Some(io::read_gray_png(&gray_path)?) } else { None };
        let pose_path = view_path(dir, "pose", i, "txt");
        let pose = if pose_path.exists() { Some(io::read_pose(&pose_path)?) } else { None };
        views.push(View { depth, gray, pose });
    }
    if views.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(Scan {
        intrinsics: cam.intrinsics,
        views,
    })
}

/// Renders every ring camera of `cfg`, adding depth noise with a per-view
/// seed derived from `cfg.seed`. Poses are the true camera-to-world motions.
pub fn render_scan(cfg: &SceneConfig) -> Result<Scan> {
    let views = cfg
        .cameras()?
        .into_iter()
        .enumerate()
        .map(|(i, pose)| {
            let (depth, gray) = render_depth(&cfg.scene, &pose, &cfg.intrinsics, cfg.width, cfg.height);
            let depth = if cfg.noise_sigma > 0.0 {
                let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
                corrupt_depth(&depth, cfg.noise_sigma, 0.0, seed)?
            } else {
                depth
            };
            Ok(View {
                depth,
                gray: Some(gray),
                pose: Some(pose),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Scan {
        intrinsics: cfg.intrinsics,
        views,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CloudParams {
    pub normals: NormalParams,
    /// Edge-aware depth smoothing in pixels before differencing; 0 disables.
    pub smooth_sigma: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            normals: NormalParams::default(),
            smooth_sigma: 0.0,
        }
    }
}

/// Camera-frame oriented cloud of one depth image.
pub fn view_cloud(depth: &DepthImage, k: &CameraIntrinsics, params: &CloudParams) -> Result<OrientedPointCloud> {
    if params.smooth_sigma > 0.0 {
        let d = smooth_depth(depth, params.smooth_sigma, params.normals.jump_threshold);
        estimate_normals(&d, k, &params.normals)
    } else {
        estimate_normals(depth, k, &params.normals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    /// Keypoint matching, RANSAC and ICP.
    #[default]
    Features,
    /// Trust the poses stored with the views.
    KnownPoses,
}

#[derive(Debug, Clone, Copy)]
pub struct AlignParams {
    pub mode: AlignMode,
    pub detector: DetectorParams,
    /// Largest descriptor distance accepted by the mutual matcher.
    pub max_descriptor_distance: f32,
    pub ransac: RansacParams,
    /// A pair is accepted once RANSAC keeps at least this many matches.
    pub min_inliers: usize,
    pub icp: IcpParams,
    /// Skip ICP and keep the RANSAC motion.
    pub skip_icp: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            mode: AlignMode::Features,
            detector: DetectorParams::default(),
            max_descriptor_distance: 0.6,
            ransac: RansacParams::default(),
            min_inliers: 12,
            icp: IcpParams {
                max_pair_distance: 0.02,
                ..IcpParams::default()
            },
            skip_icp: false,
        }
    }
}

/// How one view was placed.
#[derive(Debug, Clone, Serialize)]
pub struct ViewAlignment {
    pub view: usize,
    /// View it was registered against; `None` for the reference view and for
    /// known poses.
    pub reference: Option<usize>,
    pub keypoints: usize,
    pub matches: usize,
    pub inliers: usize,
    pub icp_iterations: usize,
    /// ICP residual before and after refinement, meters.
    pub icp_residuals: Option<(f64, f64)>,
    #[serde(skip)]
    pub pose: RigidMotion,
}

/// Registers view `k` (`cloud1`) against view `j` (`cloud0`, already in the
/// world frame through `pose0`) from pixel correspondences.
#[allow(clippy::too_many_arguments)]
pub fn align_pair(
    corrs: &[Correspondence],
    cloud0_world: &OrientedPointCloud,
    cloud1: &OrientedPointCloud,
    pose0: &RigidMotion,
    params: &AlignParams,
) -> Result<(RigidMotion, usize, usize, Option<(f64, f64)>)> {
    let fit = ransac_align(corrs, &params.ransac)?;
    if fit.inliers.len() < params.min_inliers {
        return Err(Error::AlignmentFailed(format!(
            "{} RANSAC inliers, need {}",
            fit.inliers.len(),
            params.min_inliers
        )));
    }
    let init = pose0.compose(&fit.motion);
    if params.skip_icp {
        return Ok((init, fit.inliers.len(), 0, None));
    }
    let icp = icp_refine(cloud1, cloud0_world, &init, &params.icp)?;
    let res = (icp.residuals[0], icp.final_residual());
    Ok((icp.motion, fit.inliers.len(), icp.iterations, Some(res)))
}

/// Pixel correspondences between two views from keypoint matches.
pub fn feature_correspondences(
    f0: &[Feature],
    f1: &[Feature],
    d0: &DepthImage,
    d1: &DepthImage,
    k: &CameraIntrinsics,
    max_distance: f32,
) -> Vec<Correspondence> {
    let desc0: Vec<&[f32]> = f0.iter().map(|f| f.descriptor.as_slice()).collect();
    let desc1: Vec<&[f32]> = f1.iter().map(|f| f.descriptor.as_slice()).collect();
    let pairs: Vec<_> = match_forward_backward(&desc0, &desc1, max_distance)
        .into_iter()
        .map(|(i, j, _)| {
            let (a, b) = (&f0[i].keypoint, &f1[j].keypoint);
            (i, j, Point2::new(a.u, a.v), Point2::new(b.u, b.v))
        })
        .collect();
    backproject_matches(&pairs, d0, d1, k)
}

/// Places every view in the frame of view 0.
///
/// View `k` is registered against view 0 first; if that fails it is tried
/// against the already placed views in order of index distance, and the
/// motion is chained through the one that succeeds.
pub fn align_scan(scan: &Scan, clouds: &[OrientedPointCloud], params: &AlignParams) -> Result<Vec<ViewAlignment>> {
    if scan.views.is_empty() {
        return Err(Error::EmptyScan);
    }
    if params.mode == AlignMode::KnownPoses {
        let first = scan.views[0].pose.ok_or_else(|| missing_pose(0))?.inverse();
        return scan
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let pose = first.compose(&v.pose.ok_or_else(|| missing_pose(i))?);
                Ok(unaligned(i, pose))
            })
            .collect();
    }

    let features: Vec<Vec<Feature>> = scan
        .views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let g = v.gray.as_ref().ok_or_else(|| {
                Error::AlignmentFailed(format!("view {i} has no intensity image"))
            })?;
            Ok(detect_and_describe(g, &params.detector))
        })
        .collect::<Result<_>>()?;

    let mut placed: Vec<ViewAlignment> = vec![ViewAlignment {
        keypoints: features[0].len(),
        ..unaligned(0, RigidMotion::identity())
    }];
    let mut world: Vec<OrientedPointCloud> = vec![clouds[0].clone()];
    for k in 1..scan.views.len() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&j| (j != 0, k - j));
        let mut last_err = None;
        let mut done = None;
        for j in order {
            let corrs = feature_correspondences(
                &features[j],
                &features[k],
                &scan.views[j].depth,
                &scan.views[k].depth,
                &scan.intrinsics,
                params.max_descriptor_distance,
            );
            match align_pair(&corrs, &world[j], &clouds[k], &placed[j].pose, params) {
                Ok((pose, inliers, iters, res)) => {
                    done = Some(ViewAlignment {
                        view: k,
                        reference: Some(j),
                        keypoints: features[k].len(),
                        matches: corrs.len(),
                        inliers,
                        icp_iterations: iters,
                        icp_residuals: res,
                        pose,
                    });
                    break;
                }
                Err(e) => {
                    log::debug!("view {k} against {j}: {e}");
                    last_err = Some(e);
                }
            }
        }
        let a = done.ok_or_else(|| {
            Error::AlignmentFailed(format!(
                "view {k} could not be placed ({})",
                last_err.map(|e| e.to_string()).unwrap_or_default()
            ))
        })?;
        log::info!(
            "view {k}: {} matches, {} inliers against view {}",
            a.matches,
            a.inliers,
            a.reference.unwrap_or(0)
        );
        world.push(transform_cloud(&clouds[k], &a.pose));
        placed.push(a);
    }
    Ok(placed)
}

fn missing_pose(i: usize) -> Error {
    Error::AlignmentFailed(format!("view {i} has no stored pose"))
}

fn unaligned(view: usize, pose: RigidMotion) -> ViewAlignment {
    ViewAlignment {
        view,
        reference: None,
        keypoints: 0,
        matches: 0,
        inliers: 0,
        icp_iterations: 0,
        icp_residuals: None,
        pose,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectParams {
    pub reconstruct: ReconstructParams,
    /// Points within this distance of the ground whose normal is within 60
    /// degrees of the ground normal count as ground. `None` uses twice the
    /// plane detector's threshold.
    pub ground_band: Option<f64>,
    /// Cell size of the connectivity used to keep the largest object cluster,
    /// meters; `None` keeps every point.
    pub cluster_cell: Option<f64>,
    /// Voxel size for thinning the object cloud before the solve; `None`
    /// uses half the grid spacing, `Some(0.0)` disables thinning.
    pub voxel_thin: Option<f64>,
    /// Surface farther than this many grid cells from every sample counts as
    /// unsupported.
    pub support_cells: f64,
    /// Unsupported area fraction above which the volume is unreliable.
    pub max_unsupported_fraction: f64,
}

impl Default for ObjectParams {
    fn default() -> Self {
        Self {
            reconstruct: ReconstructParams::default(),
            ground_band: None,
            cluster_cell: Some(0.01),
            voxel_thin: None,
            support_cells: 2.0,
            max_unsupported_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObjectReconstruction {
    /// Surface in the input (world) frame; open where it meets the ground.
    pub mesh: TriangleMesh,
    /// Samples that fed the solve, in the input frame (mirror copies
    /// excluded).
    pub object_cloud: OrientedPointCloud,
    pub grid_dims: [usize; 3],
    pub grid_spacing: f64,
    pub isovalue: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// Share of the surface area farther than the support distance from any
    /// sample.
    pub unsupported_fraction: f64,
}

/// Separates the object from the ground. Returns the kept samples in the
/// frame where `plane` is `z = 0` with its normal on `+z`.
pub fn segment_object(
    cloud: &OrientedPointCloud,
    plane: &Plane,
    band: f64,
    cluster_cell: Option<f64>,
) -> (OrientedPointCloud, RigidMotion) {
    let g = support_motion(plane);
    let aligned = transform_cloud(cloud, &g);
    let cos60 = 0.5;
    let kept = aligned.filter(|i| {
        let z = aligned.points[i].z;
        let flat = aligned.normals[i].z.abs() > cos60;
        z > band || (z > band / 2.0 && !flat)
    });
    let kept = match cluster_cell {
        Some(c) if c > 0.0 => largest_cluster(&kept, c),
        _ => kept,
    };
    (kept, g)
}

/// Points of the largest 26-connected set of occupied cells.
fn largest_cluster(cloud: &OrientedPointCloud, cell: f64) -> OrientedPointCloud {
    if cloud.is_empty() {
        return cloud.clone();
    }
    let key = |p: &Point3<f64>| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut point_cell = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let n = cells.len();
        point_cell.push(*cells.entry(key(p)).or_insert(n));
    }
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (&(x, y, z), &a) in &cells {
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(&b) = cells.get(&(x + dx, y + dy, z + dz)) {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
        }
    }
    let roots: Vec<usize> = (0..cells.len()).map(|c| find(&mut parent, c)).collect();
    let mut counts = vec![0usize; cells.len()];
    for &c in &point_cell {
        counts[roots[c]] += 1;
    }
    // most points, then lowest root for determinism
    let best = (0..counts.len()).max_by_key(|&r| (counts[r], std::cmp::Reverse(r))).unwrap();
    cloud.filter(|i| roots[point_cell[i]] == best)
}

/// Mirror image of a cloud through `z = 0`.
fn mirrored(cloud: &OrientedPointCloud) -> OrientedPointCloud {
    OrientedPointCloud {
        points: cloud.points.iter().map(|p| Point3::new(p.x, p.y, -p.z)).collect(),
        normals: cloud.normals.iter().map(|n| Vector3::new(n.x, n.y, -n.z)).collect(),
        colors: None,
    }
}

fn thin(cloud: &OrientedPointCloud, voxel: f64) -> OrientedPointCloud {
    if voxel > 0.0 {
        merge_views(&[(cloud.clone(), RigidMotion::identity())], Some(voxel))
    } else {
        cloud.clone()
    }
}

/// Area share of faces whose centroid is farther than `dist` from `samples`.
fn unsupported_fraction(mesh: &TriangleMesh, samples: &OrientedPointCloud, dist: f64) -> f64 {
    if mesh.is_empty() || samples.is_empty() {
        return 1.0;
    }
    let tree = KdTree::build(&samples.points);
    let mut total = 0.0;
    let mut far = 0.0;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(f);
        let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
        let area = mesh.face_area(f);
        total += area;
        if tree.nearest(&centroid).is_some_and(|(_, d2)| d2 > dist * dist) {
            far += area;
        }
    }
    if total > 0.0 { far / total } else { 1.0 }
}

/// Reconstructs the object surface from a merged cloud.
///
/// With a ground plane, ground samples are dropped, the rest is mirrored
/// through the plane so the solve sees a closed shape, and the surface is
/// cut at the plane, leaving it open where the object rests. Without one the
/// whole cloud is reconstructed as a closed surface.
pub fn reconstruct_object(
    cloud: &OrientedPointCloud,
    plane: Option<&Plane>,
    plane_threshold: f64,
    params: &ObjectParams,
) -> Result<ObjectReconstruction> {
    let res = params.reconstruct.grid_resolution;
    let (samples, to_frame) = match plane {
        Some(p) => {
            let band = params.ground_band.unwrap_or(2.0 * plane_threshold);
            segment_object(cloud, p, band, params.cluster_cell)
        }
        None => (cloud.clone(), RigidMotion::identity()),
    };
    if samples.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let solve_cloud = if plane.is_some() {
        let mut c = samples.clone();
        c.extend(&mirrored(&samples));
        c
    } else {
        samples.clone()
    };
    let (lo, hi) = solve_cloud.bounds().ok_or(Error::EmptyCloud)?;
    let spacing = VoxelGrid::covering(&lo, &hi, res)?.spacing;
    let voxel = params.voxel_thin.unwrap_or(spacing / 2.0);
    let solve_cloud = thin(&solve_cloud, voxel);
    let rec = reconstruct(&solve_cloud, &params.reconstruct)?;
    let grid = rec.field.grid;

    let mut mesh = rec.mesh;
    if plane.is_some() {
        mesh = largest_component(&clip_below_ground(&mesh));
    }
    let support = params.support_cells * grid.spacing;
    let unsupported = unsupported_fraction(&mesh, &samples, support);
    let back = to_frame.inverse();
    Ok(ObjectReconstruction {
        mesh: if plane.is_some() { mesh.transformed(&back) } else { mesh },
        object_cloud: if plane.is_some() { transform_cloud(&samples, &back) } else { samples },
        grid_dims: grid.dims,
        grid_spacing: grid.spacing,
        isovalue: rec.isovalue,
        cg_iterations: rec.cg_iterations,
        cg_residual: rec.cg_residual,
        unsupported_fraction: unsupported,
    })
}

/// Volume of a reconstructed object, adding a warning when much of the
/// surface was not backed by samples.
pub fn object_volume(
    rec: &ObjectReconstruction,
    plane: Option<&Plane>,
    params: &VolumeParams,
    max_unsupported: f64,
) -> VolumeReport {
    let mut report = estimate_volume(&rec.mesh, plane, params);
    if rec.unsupported_fraction > max_unsupported {
        report.unreliable = true;
        report.warnings.push(format!(
            "{:.0}% of the surface is far from any sample",
            100.0 * rec.unsupported_fraction
        ));
    }
    report
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineConfig {
    pub cloud: CloudParams,
    pub align: AlignParams,
    /// Voxel size for thinning the merged cloud; `None` keeps every point.
    pub merge_voxel: Option<f64>,
    /// Detect a ground plane and treat the object as resting on it.
    pub use_ground: bool,
    pub plane: PlaneParams,
    pub object: ObjectParams,
    pub volume: VolumeParams,
}

impl PipelineConfig {
    pub fn new() -> Self {
        Self {
            use_ground: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub normals: f64,
    pub align: f64,
    pub merge: f64,
    pub plane: f64,
    pub reconstruct: f64,
    pub volume: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaneSummary {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inliers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub views: usize,
    pub view_points: Vec<usize>,
    pub alignment: Vec<ViewAlignment>,
    pub merged_points: usize,
    pub plane: Option<PlaneSummary>,
    pub object_points: usize,
    pub grid_dims: [usize; 3],
    pub grid_spacing: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub isovalue: f64,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub unsupported_fraction: f64,
    pub volume: VolumeReport,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    /// Per-view camera-to-world poses in the frame of view 0.
    pub poses: Vec<RigidMotion>,
    pub merged: OrientedPointCloud,
    pub plane: Option<PlaneFit>,
    pub object: ObjectReconstruction,
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Runs every stage on a scan.
pub fn run_pipeline(scan: &Scan, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let clouds: Vec<OrientedPointCloud> = scan
        .views
        .iter()
        .map(|v| view_cloud(&v.depth, &scan.intrinsics, &cfg.cloud))
        .collect::<Result<_>>()?;
    timings.normals = seconds(t);

    let t = Instant::now();
    let alignment = align_scan(scan, &clouds, &cfg.align)?;
    timings.align = seconds(t);

    let t = Instant::now();
    let posed: Vec<(OrientedPointCloud, RigidMotion)> =
        clouds.iter().cloned().zip(alignment.iter().map(|a| a.pose)).collect();
    let merged = merge_views(&posed, cfg.merge_voxel);
    timings.merge = seconds(t);

    let t = Instant::now();
    let plane = if cfg.use_ground {
        Some(detect_ground_plane(&merged.points, &cfg.plane)?)
    } else {
        None
    };
    timings.plane = seconds(t);

    let t = Instant::now();
    let ground = plane.as_ref().map(|p| p.plane);
    let object = reconstruct_object(&merged, ground.as_ref(), cfg.plane.distance_threshold, &cfg.object)?;
    timings.reconstruct = seconds(t);

    let t = Instant::now();
    let volume = object_volume(&object, ground.as_ref(), &cfg.volume, cfg.object.max_unsupported_fraction);
    timings.volume = seconds(t);
    timings.total = seconds(start);

    let report = PipelineReport {
        views: scan.views.len(),
        view_points: clouds.iter().map(|c| c.len()).collect(),
        alignment: alignment.clone(),
        merged_points: merged.len(),
        plane: plane.as_ref().map(|p| PlaneSummary {
            normal: p.plane.normal.into(),
            offset: p.plane.offset,
            inliers: p.inliers.len(),
        }),
        object_points: object.object_cloud.len(),
        grid_dims: object.grid_dims,
        grid_spacing: object.grid_spacing,
        cg_iterations: object.cg_iterations,
        cg_residual: object.cg_residual,
        isovalue: object.isovalue,
        mesh_vertices: object.mesh.vertices.len(),
        mesh_faces: object.mesh.faces.len(),
        unsupported_fraction: object.unsupported_fraction,
        volume,
        timings,
    };
    Ok(PipelineOutput {
        report,
        poses: alignment.iter().map(|a| a.pose).collect(),
        merged,
        plane,
        object,
    })
}
