//! Closed-form test meshes.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;

/// Icosahedron subdivided `level` times with vertices projected onto the
/// sphere; outward winding.
pub fn icosphere(center: Point3<f64>, radius: f64, level: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut unit: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, unit: &mut Vec<Vector3<f64>>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                unit.push(((unit[a] + unit[b]) / 2.0).normalize());
                unit.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut unit);
            let bc = midpoint(b, c, &mut unit);
            let ca = midpoint(c, a, &mut unit);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices: Vec<_> = unit.iter().map(|u| center + u * radius).collect();
    let mut mesh = TriangleMesh { vertices, faces };
    for k in 0..mesh.faces.len() {
        let [a, b, c] = mesh.corners(k);
        let centroid = (a.coords + b.coords + c.coords) / 3.0 - center.coords;
        if mesh.face_cross(k).dot(&centroid) < 0.0 {
            mesh.faces[k].swap(1, 2);
        }
    }
    mesh
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeStyle {
    /// Faces share vertices along the cube edges.
    Welded,
    /// Every face has its own vertices, so vertex normals equal face normals.
    Faceted,
}

/// Axis-aligned cube `[origin, origin + size]^3`, outward wound. Each face is
/// split into `divisions^2` squares, each fanned into four triangles around
/// its center, which keeps vertex normals symmetric. With `open_bottom` the
/// `z = origin.z` face is left out.
pub fn cube_mesh(
    origin: Point3<f64>,
    size: f64,
    divisions: usize,
    style: CubeStyle,
    open_bottom: bool,
) -> TriangleMesh {
    let n = divisions.max(1);
    // lattice in half-cell units, 0..=2n per axis
    let mut index: HashMap<(usize, [usize; 3]), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let half = size / (2 * n) as f64;
    for axis in 0..3 {
        for side in [0usize, 1] {
            if open_bottom && axis == 2 && side == 0 {
                continue;
            }
            let face_id = axis * 2 + side;
            let (u, v) = if side == 1 {
                ((axis + 1) % 3, (axis + 2) % 3)
            } else {
                ((axis + 2) % 3, (axis + 1) % 3)
            };
            let mut vert = |a: usize, b: usize| {
                let mut key = [0usize; 3];
                key[axis] = side * 2 * n;
                key[u] = a;
                key[v] = b;
                let owner = match style {
                    CubeStyle::Welded => 0,
                    CubeStyle::Faceted => face_id,
                };
                *index.entry((owner, key)).or_insert_with(|| {
                    vertices.push(
                        origin
                            + Vector3::new(key[0] as f64, key[1] as f64, key[2] as f64) * half,
                    );
                    vertices.len() - 1
                })
            };
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (2 * i, 2 * j);
                    let c00 = vert(a, b);
                    let c10 = vert(a + 2, b);
                    let c11 = vert(a + 2, b + 2);
                    let c01 = vert(a, b + 2);
                    let m = vert(a + 1, b + 1);
                    faces.extend([[c00, c10, m], [c10, c11, m], [c11, c01, m], [c01, c00, m]]);
                }
            }
        }
    }
    TriangleMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_topology() {
        for level in 0..3 {
            let m = icosphere(Point3::origin(), 1.0, level);
            assert!(m.is_watertight());
            assert_eq!(m.euler_characteristic(), 2);
            assert_eq!(m.faces.len(), 20 * 4usize.pow(level));
        }
    }

    #[test]
    fn cube_topology() {
        let welded = cube_mesh(Point3::origin(), 1.0, 3, CubeStyle::Welded, false);
        assert!(welded.is_watertight());
        assert_eq!(welded.euler_characteristic(), 2);
        let open = cube_mesh(Point3::origin(), 1.0, 3, CubeStyle::Welded, true);
        assert_eq!(open.boundary_edges().len(), 4 * 3);
        for (a, b) in open.boundary_edges() {
            assert_eq!(open.vertices[a].z, 0.0);
            assert_eq!(open.vertices[b].z, 0.0);
        }
        let faceted = cube_mesh(Point3::origin(), 1.0, 2, CubeStyle::Faceted, false);
        assert_eq!(faceted.boundary_edges().len(), 12 * 2 * 2);
    }

    #[test]
    fn cube_faces_point_outward() {
        let c = cube_mesh(Point3::new(-0.5, -0.5, -0.5), 1.0, 2, CubeStyle::Welded, false);
        for k in 0..c.faces.len() {
            let [a, b, d] = c.corners(k);
            let centroid = (a.coords + b.coords + d.coords) / 3.0;
            assert!(c.face_cross(k).dot(&centroid) > 0.0);
        }
    }
}
