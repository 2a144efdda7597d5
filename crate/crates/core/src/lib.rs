//! Sparse-view RGBD reconstruction with divergence-theorem volume estimation.
//!
//! The pipeline turns calibrated depth views into an oriented point cloud
//! ([`rgbd`]), aligns the views ([`registration`]), reconstructs a triangle
//! mesh with a screened Poisson solve and marching cubes ([`poisson`]), and
//! integrates the enclosed volume with a vertex-normal quadrature of the
//! divergence theorem ([`volume`]), including meshes left open where the
//! object rests on the ground.

pub mod error;
pub mod io;
pub mod pipeline;
pub mod poisson;
pub mod registration;
pub mod rgbd;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use registration::RigidMotion;
pub use rgbd::{CameraIntrinsics, DepthImage, GrayImage, OrientedPointCloud};
