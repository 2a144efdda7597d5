//! Enclosed volume of triangle meshes, including meshes left open where the
//! object rests on a support plane.

mod estimate;
pub mod fixtures;
mod integrate;
mod mesh;
mod plane;

pub use estimate::{clip_below_ground, estimate_volume, largest_component, VolumeParams, VolumeReport};
pub use integrate::{
    mesh_volume_divergence, mesh_volume_divergence_with, mesh_volume_tetrahedra, vertex_normals,
    DivergenceVolume, FlowField, VertexNormals,
};
pub use mesh::TriangleMesh;
pub use plane::{
    align_support_to_plane, detect_ground_plane, support_motion, Plane, PlaneFit, PlaneParams,
};
