use std::collections::HashMap;

use nalgebra::Point3;
use serde::Serialize;

use super::integrate::{mesh_volume_divergence_with, mesh_volume_tetrahedra, FlowField};
use super::mesh::TriangleMesh;
use super::plane::{align_support_to_plane, Plane};
use crate::registration::RigidMotion;

#[derive(Debug, Clone, Copy, Default)]
pub struct VolumeParams {
    /// Largest acceptable support gap in meters; `None` means twice the mean
    /// edge length.
    pub gap_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    /// Divergence-theorem volume with averaged vertex normals, m^3.
    pub volume: f64,
    /// Signed-tetrahedron volume of the same (aligned) mesh, m^3.
    pub tetra_volume: f64,
    pub boundary_edges: usize,
    /// Largest `|z|` over boundary vertices after support alignment.
    pub support_gap: Option<f64>,
    pub gap_tolerance: f64,
    pub flagged_vertices: usize,
    pub degenerate_faces: usize,
    pub unreliable: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub motion: Option<RigidMotion>,
}

/// Integrates the enclosed volume, first moving `plane` (if given) to `z = 0`
/// so an open support hole carries no flux.
pub fn estimate_volume(
    mesh: &TriangleMesh,
    plane: Option<&Plane>,
    params: &VolumeParams,
) -> VolumeReport {
    let (aligned, motion) = match plane {
        Some(p) => {
            let (m, g) = align_support_to_plane(mesh, p);
            (m, Some(g))
        }
        None => (mesh.clone(), None),
    };
    let mut warnings = Vec::new();
    if aligned.is_empty() {
        warnings.push("empty mesh".to_string());
    }
    let div = mesh_volume_divergence_with(&aligned, FlowField::X);
    // topology diagnostics see through split creases
    let topo = aligned.welded();
    let boundary = topo.boundary_edges();
    let gap_tolerance = params
        .gap_tolerance
        .unwrap_or_else(|| 2.0 * topo.mean_edge_length());
    let support_gap = plane.map(|_| {
        boundary
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .map(|i| topo.vertices[i].z.abs())
            .fold(0.0, f64::max)
    });
    match support_gap {
        Some(gap) if gap > gap_tolerance => warnings.push(format!(
            "support gap {gap:.4e} m exceeds tolerance {gap_tolerance:.4e} m"
        )),
        None if !boundary.is_empty() => warnings.push(format!(
            "mesh has {} boundary edges and no support plane",
            boundary.len()
        )),
        _ => {}
    }
    if div.flagged_vertices > 0 {
        log::warn!("{} vertices excluded from quadrature", div.flagged_vertices);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    VolumeReport {
        volume: div.volume,
        tetra_volume: mesh_volume_tetrahedra(&aligned),
        boundary_edges: boundary.len(),
        support_gap,
        gap_tolerance,
        flagged_vertices: div.flagged_vertices,
        degenerate_faces: div.degenerate_faces,
        unreliable: !warnings.is_empty(),
        warnings,
        motion,
    }
}

/// Cuts the mesh along `z = 0` and keeps the part with `z >= 0`. Cut vertices
/// are shared between neighboring faces, so the cut is a clean boundary
/// lying exactly in the plane.
pub fn clip_below_ground(mesh: &TriangleMesh) -> TriangleMesh {
    let mut vertices = mesh.vertices.clone();
    let mut cuts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cut = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| -> usize {
        let (pa, pb) = (vertices[a], vertices[b]);
        if pa.z == 0.0 {
            return a;
        }
        if pb.z == 0.0 {
            return b;
        }
        *cuts.entry((a.min(b), a.max(b))).or_insert_with(|| {
            // interpolate from the lower index for a symmetric result
            let (p, q) = if a < b { (pa, pb) } else { (pb, pa) };
            let t = p.z / (p.z - q.z);
            let mut x = p + (q - p) * t;
            x.z = 0.0;
            vertices.push(x);
            vertices.len() - 1
        })
    };
    let mut faces = Vec::with_capacity(mesh.faces.len());
    for f in &mesh.faces {
        let above = f.map(|i| mesh.vertices[i].z >= 0.0);
        let count = above.iter().filter(|a| **a).count();
        match count {
            3 => faces.push(*f),
            0 => {}
            1 => {
                let r = (0..3).find(|&k| above[k]).unwrap();
                let (a, b, c) = (f[r], f[(r + 1) % 3], f[(r + 2) % 3]);
                let ab = cut(a, b, &mut vertices);
                let ca = cut(c, a, &mut vertices);
                faces.push([a, ab, ca]);
            }
            _ => {
                let r = (0..3).find(|&k| !above[k]).unwrap();
                let (c, a, b) = (f[r], f[(r + 1) % 3], f[(r + 2) % 3]);
                let bc = cut(b, c, &mut vertices);
                let ca = cut(c, a, &mut vertices);
                faces.push([a, b, bc]);
                faces.push([a, bc, ca]);
            }
        }
    }
    faces.retain(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
    TriangleMesh { vertices, faces }.compacted()
}

/// The connected component with the most faces.
pub fn largest_component(mesh: &TriangleMesh) -> TriangleMesh {
    match mesh.connected_components().first() {
        Some(c) => mesh.with_faces(c),
        None => mesh.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{cube_mesh, icosphere, CubeStyle};
    use super::super::integrate::mesh_volume_divergence;
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn closed_mesh_without_plane_passes_through() {
        let m = icosphere(Point3::origin(), 0.1, 3);
        let r = estimate_volume(&m, None, &VolumeParams::default());
        assert_eq!(r.volume, mesh_volume_divergence(&m));
        assert!(!r.unreliable);
        assert_eq!(r.boundary_edges, 0);
    }

    #[test]
    fn open_bottom_cube_with_true_plane() {
        let closed = cube_mesh(Point3::new(0.0, 0.0, 0.0), 0.2, 4, CubeStyle::Faceted, false);
        let open = cube_mesh(Point3::new(0.0, 0.0, 0.0), 0.2, 4, CubeStyle::Faceted, true);
        let r = estimate_volume(&open, Some(&Plane::ground()), &VolumeParams::default());
        let v = mesh_volume_divergence(&closed);
        assert!((r.volume - v).abs() / v < 1e-6);
        assert_eq!(r.support_gap, Some(0.0));
        assert!(!r.unreliable);
    }

    #[test]
    fn tilted_plane_is_flagged() {
        let open = cube_mesh(Point3::new(0.0, 0.0, 0.0), 0.2, 16, CubeStyle::Faceted, true);
        let truth = estimate_volume(&open, Some(&Plane::ground()), &VolumeParams::default());
        let tilt = 10f64.to_radians();
        let wrong = Plane::new(Vector3::new(tilt.sin(), 0.0, tilt.cos()), 0.0).unwrap();
        let r = estimate_volume(&open, Some(&wrong), &VolumeParams::default());
        assert!((r.volume - truth.volume).abs() / truth.volume > 1e-3);
        assert!(r.support_gap.unwrap() > r.gap_tolerance);
        assert!(r.unreliable);
    }

    #[test]
    fn clipping_a_sphere_at_its_equator() {
        let m = icosphere(Point3::new(0.0, 0.0, 0.013), 0.1, 4);
        let top = clip_below_ground(&m);
        assert!(top.vertices.iter().all(|p| p.z >= 0.0));
        let boundary = top.boundary_edges();
        assert!(!boundary.is_empty());
        for (a, b) in boundary {
            assert_eq!(top.vertices[a].z, 0.0);
            assert_eq!(top.vertices[b].z, 0.0);
        }
        // every boundary vertex has exactly two boundary edges: one clean loop
        let mut degree = HashMap::new();
        for (a, b) in top.boundary_edges() {
            *degree.entry(a).or_insert(0) += 1;
            *degree.entry(b).or_insert(0) += 1;
        }
        assert!(degree.values().all(|&d| d == 2));
        // cap volume of a sphere cut at height 0.013 below its center
        let (r, h): (f64, f64) = (0.1, 0.1 + 0.013);
        let cap = std::f64::consts::PI * h * h * (3.0 * r - h) / 3.0;
        let v = estimate_volume(&top, Some(&Plane::ground()), &VolumeParams::default());
        assert!((v.volume - cap).abs() / cap < 0.01, "{} vs {cap}", v.volume);
    }

    #[test]
    fn largest_component_wins() {
        let big = icosphere(Point3::origin(), 1.0, 2);
        let small = icosphere(Point3::new(5.0, 0.0, 0.0), 0.1, 0);
        let mut both = small.clone();
        let off = both.vertices.len();
        both.vertices.extend(big.vertices.iter().copied());
        both.faces.extend(big.faces.iter().map(|f| f.map(|i| i + off)));
        let l = largest_component(&both);
        assert_eq!(l.faces.len(), big.faces.len());
    }
}
