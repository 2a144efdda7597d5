use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::RigidMotion;
use crate::rgbd::OrientedPointCloud;

/// Maps every view into the world frame and concatenates them.
///
/// With `voxel_size`, points sharing a cubic cell of that edge length are
/// replaced by their mean position and renormalized mean normal; cells are
/// emitted in order of first occupancy.
pub fn merge_views(
    views: &[(OrientedPointCloud, RigidMotion)],
    voxel_size: Option<f64>,
) -> OrientedPointCloud {
    let mut merged = OrientedPointCloud::default();
    for (cloud, g) in views {
        merged.extend(&transform_cloud(cloud, g));
    }
    match voxel_size {
        Some(h) if h > 0.0 => voxel_thin(&merged, h),
        _ => merged,
    }
}

pub fn transform_cloud(cloud: &OrientedPointCloud, g: &RigidMotion) -> OrientedPointCloud {
    OrientedPointCloud {
        points: cloud.points.iter().map(|p| g.apply_point(p)).collect(),
        normals: cloud.normals.iter().map(|n| g.apply_vector(n)).collect(),
        colors: cloud.colors.clone(),
    }
}

fn voxel_thin(cloud: &OrientedPointCloud, h: f64) -> OrientedPointCloud {
    struct Cell {
        sum_p: Vector3<f64>,
        sum_n: Vector3<f64>,
        sum_c: [u32; 3],
        count: u32,
    }
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    for (i, (p, n)) in cloud.points.iter().zip(&cloud.normals).enumerate() {
        let key = [
            (p.x / h).floor() as i64,
            (p.y / h).floor() as i64,
            (p.z / h).floor() as i64,
        ];
        let idx = *slot.entry(key).or_insert_with(|| {
            cells.push(Cell {
                sum_p: Vector3::zeros(),
                sum_n: Vector3::zeros(),
                sum_c: [0; 3],
                count: 0,
            });
            cells.len() - 1
        });
        let cell = &mut cells[idx];
        cell.sum_p += p.coords;
        cell.sum_n += n;
        if let Some(c) = &cloud.colors {
            for k in 0..3 {
                cell.sum_c[k] += c[i][k] as u32;
            }
        }
        cell.count += 1;
    }
    let mut out = OrientedPointCloud::default();
    let mut colors = Vec::new();
    for cell in cells {
        let n = cell.sum_n.norm();
        // opposing normals in one cell: no usable orientation
        if n < 1e-9 {
            continue;
        }
        out.points.push(Point3::from(cell.sum_p / cell.count as f64));
        out.normals.push(cell.sum_n / n);
        colors.push(cell.sum_c.map(|s| (s / cell.count) as u8));
    }
    if cloud.colors.is_some() {
        out.colors = Some(colors);
    }
    out
}
