//! Implicit surface reconstruction: screened Poisson on a regular grid and
//! marching-cubes extraction of the level set through the samples.

mod grid;
mod marching_cubes;
mod solver;
mod tables;

pub use grid::{splat_normals, ScalarField, VectorField3, VoxelGrid};
pub use marching_cubes::{marching_cubes, InsideSign};
pub use solver::{
    choose_isovalue, divergence, edge_average, gradient, laplacian, solve_screened_poisson,
    EdgeField, PoissonParams, PoissonSolution,
};

use crate::error::{Error, Result};
use crate::rgbd::OrientedPointCloud;
use crate::volume::TriangleMesh;

#[derive(Debug, Clone, Copy)]
pub struct ReconstructParams {
    /// Cells along the longest grid axis.
    pub grid_resolution: usize,
    pub solver: PoissonParams,
    /// Added to the automatically chosen iso-value.
    pub iso_offset: f64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            grid_resolution: 128,
            solver: PoissonParams::default(),
            iso_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub field: ScalarField,
    pub isovalue: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
}

/// Grid, splat, solve, pick the iso-value and extract the surface. Normals
/// are expected to point out of the object; the interior is where the field
/// falls below the iso-value.
pub fn reconstruct(cloud: &OrientedPointCloud, params: &ReconstructParams) -> Result<Reconstruction> {
    let (lo, hi) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let grid = VoxelGrid::covering(&lo, &hi, params.grid_resolution)?;
    let v = splat_normals(cloud, &grid)?;
    let sol = solve_screened_poisson(&v, cloud, &params.solver)?;
    let iso = choose_isovalue(&sol.field, cloud)? + params.iso_offset;
    let mesh = marching_cubes(&sol.field, iso, InsideSign::Below)?;
    log::debug!(
        "poisson: grid {:?} h={:.4}, {} CG iterations, {} faces",
        grid.dims,
        grid.spacing,
        sol.iterations,
        mesh.faces.len()
    );
    Ok(Reconstruction {
        mesh,
        cg_residual: *sol.residuals.last().unwrap_or(&0.0),
        cg_iterations: sol.iterations,
        field: sol.field,
        isovalue: iso,
    })
}
