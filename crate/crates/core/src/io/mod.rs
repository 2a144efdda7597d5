//! File formats: depth and intensity images, point clouds and meshes, and
//! the small text files that connect the pipeline stages.

mod image;
mod obj;
mod ply;
mod text;

pub use image::{
    read_depth, read_depth_pfm, read_depth_png, read_gray_png, write_depth, write_depth_pfm,
    write_depth_png, write_gray_png,
};
pub use obj::{read_obj, write_obj};
pub use ply::{read_ply_cloud, read_ply_mesh, write_ply_cloud, write_ply_mesh, PlyFormat};
pub use text::{
    read_correspondences, read_intrinsics, read_plane, read_pose, read_scalar_field,
    write_correspondences, write_intrinsics, write_plane, write_pose, write_scalar_field,
    CameraFile,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::TriangleMesh;

/// Reads a mesh by extension (`.ply` or `.obj`).
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match image::extension(path).as_str() {
        "ply" => read_ply_mesh(path),
        "obj" => read_obj(path),
        other => Err(Error::parse(path, 0, format!("unsupported mesh format '{other}'"))),
    }
}

/// Writes a mesh by extension; PLY is binary little-endian.
pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match image::extension(path).as_str() {
        "ply" => write_ply_mesh(path, mesh, PlyFormat::BinaryLittleEndian),
        "obj" => write_obj(path, mesh),
        other => Err(Error::parse(path, 0, format!("unsupported mesh format '{other}'"))),
    }
}
