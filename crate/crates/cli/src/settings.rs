use std::path::Path;

use clap::Args;
use serde::Deserialize;

use scanvol::pipeline::{AlignMode, PipelineConfig};
use scanvol::{Error, Result};

/// Stage parameters; each may also come from the `--config` file under the
/// same name.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StageArgs {
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Edge-aware depth smoothing before normal estimation, pixels.
    #[arg(long, global = true)]
    pub smooth_sigma: Option<f64>,
    /// Depth discontinuity threshold for normal estimation, meters.
    #[arg(long, global = true)]
    pub jump_thresh: Option<f64>,

    /// Use the stored poses instead of registering the views.
    #[arg(long, global = true)]
    #[serde(default)]
    pub known_poses: bool,
    #[arg(long, global = true)]
    pub ransac_iters: Option<usize>,
    /// RANSAC inlier distance, meters.
    #[arg(long, global = true)]
    pub inlier_thresh: Option<f64>,
    #[arg(long, global = true)]
    pub min_inliers: Option<usize>,
    #[arg(long, global = true)]
    pub descriptor_distance: Option<f32>,
    #[arg(long, global = true)]
    pub icp_iters: Option<usize>,
    /// ICP convergence threshold on the residual change, meters.
    #[arg(long, global = true)]
    pub icp_eps: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default)]
    pub skip_icp: bool,
    /// Voxel size for thinning the merged cloud, meters.
    #[arg(long, global = true)]
    pub voxel_thin: Option<f64>,

    /// Do not look for a ground plane; reconstruct a closed surface.
    #[arg(long, global = true)]
    #[serde(default)]
    pub no_ground: bool,
    #[arg(long, global = true)]
    pub plane_iters: Option<usize>,
    /// Ground plane inlier distance, meters.
    #[arg(long, global = true)]
    pub plane_thresh: Option<f64>,
    /// Connectivity cell for isolating the object, meters (0 disables).
    #[arg(long, global = true)]
    pub cluster_cell: Option<f64>,

    /// Cells along the longest grid axis.
    #[arg(long, global = true)]
    pub grid_res: Option<usize>,
    #[arg(long, global = true)]
    pub screening_alpha: Option<f64>,
    #[arg(long, global = true)]
    pub cg_tol: Option<f64>,
    #[arg(long, global = true)]
    pub cg_max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub iso_offset: Option<f64>,

    /// Largest acceptable support gap, meters.
    #[arg(long, global = true)]
    pub gap_tol: Option<f64>,
}

impl StageArgs {
    /// Command-line values win over the config file.
    pub fn over(self, file: StageArgs) -> StageArgs {
        macro_rules! pick {
            ($($f:ident),*) => {
                StageArgs {
                    $($f: self.$f.or(file.$f),)*
                    known_poses: self.known_poses || file.known_poses,
                    skip_icp: self.skip_icp || file.skip_icp,
                    no_ground: self.no_ground || file.no_ground,
                }
            };
        }
        pick!(
            seed, threads, smooth_sigma, jump_thresh, ransac_iters, inlier_thresh, min_inliers,
            descriptor_distance, icp_iters, icp_eps, voxel_thin, plane_iters, plane_thresh,
            cluster_cell, grid_res, screening_alpha, cg_tol, cg_max_iters, iso_offset, gap_tol
        )
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::new();
        let bad = |what: &str, v: &dyn std::fmt::Display| {
            Err(Error::InvalidParameter(format!("{what} = {v} is out of range")))
        };
        if let Some(s) = self.seed {
            c.align.ransac.seed = s;
            c.plane.seed = s;
        }
        if let Some(v) = self.smooth_sigma {
            if !(0.0..=20.0).contains(&v) {
                return bad("smooth-sigma", &v);
            }
            c.cloud.smooth_sigma = v;
        }
        if let Some(v) = self.jump_thresh {
            if !(v > 0.0) {
                return bad("jump-thresh", &v);
            }
            c.cloud.normals.jump_threshold = v;
        }
        if self.known_poses {
            c.align.mode = AlignMode::KnownPoses;
        }
        if let Some(v) = self.ransac_iters {
            if v == 0 {
                return bad("ransac-iters", &v);
            }
            c.align.ransac.iterations = v;
        }
        if let Some(v) = self.inlier_thresh {
            if !(v > 0.0) {
                return bad("inlier-thresh", &v);
            }
            c.align.ransac.inlier_threshold = v;
        }
        if let Some(v) = self.min_inliers {
            if v < 3 {
                return bad("min-inliers", &v);
            }
            c.align.min_inliers = v;
        }
        if let Some(v) = self.descriptor_distance {
            if !(v > 0.0) {
                return bad("descriptor-distance", &v);
            }
            c.align.max_descriptor_distance = v;
        }
        if let Some(v) = self.icp_iters {
            c.align.icp.max_iterations = v;
        }
        if let Some(v) = self.icp_eps {
            if !(v >= 0.0) {
                return bad("icp-eps", &v);
            }
            c.align.icp.convergence_eps = v;
        }
        c.align.skip_icp = self.skip_icp;
        if let Some(v) = self.voxel_thin {
            if !(v >= 0.0) {
                return bad("voxel-thin", &v);
            }
            c.merge_voxel = (v > 0.0).then_some(v);
        }
        c.use_ground = !self.no_ground;
        if let Some(v) = self.plane_iters {
            if v == 0 {
                return bad("plane-iters", &v);
            }
            c.plane.iterations = v;
        }
        if let Some(v) = self.plane_thresh {
            if !(v > 0.0) {
                return bad("plane-thresh", &v);
            }
            c.plane.distance_threshold = v;
        }
        if let Some(v) = self.cluster_cell {
            if !(v >= 0.0) {
                return bad("cluster-cell", &v);
            }
            c.object.cluster_cell = (v > 0.0).then_some(v);
        }
        if let Some(v) = self.grid_res {
            if !(16..=1024).contains(&v) {
                return bad("grid-res", &v);
            }
            c.object.reconstruct.grid_resolution = v;
        }
        if let Some(v) = self.screening_alpha {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("screening-alpha", &v);
            }
            c.object.reconstruct.solver.screening_alpha = v;
        }
        if let Some(v) = self.cg_tol {
            if !(v > 0.0 && v < 1.0) {
                return bad("cg-tol", &v);
            }
            c.object.reconstruct.solver.cg_tol = v;
        }
        if let Some(v) = self.cg_max_iters {
            if v == 0 {
                return bad("cg-max-iters", &v);
            }
            c.object.reconstruct.solver.cg_max_iters = v;
        }
        if let Some(v) = self.iso_offset {
            if !v.is_finite() {
                return bad("iso-offset", &v);
            }
            c.object.reconstruct.iso_offset = v;
        }
        if let Some(v) = self.gap_tol {
            if !(v > 0.0) {
                return bad("gap-tol", &v);
            }
            c.volume.gap_tolerance = Some(v);
        }
        Ok(c)
    }
}

pub fn read_config(path: &Path) -> Result<StageArgs> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::parse(path, line, e.message().to_string())
    })
}
