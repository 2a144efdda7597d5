use super::grid::ScalarField;
use super::tables::TRI_TABLE;
use crate::error::{Error, Result};
use crate::volume::TriangleMesh;

/// Which side of the level set is the interior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InsideSign {
    /// Interior where `phi < C`.
    #[default]
    Below,
    /// Interior where `phi > C`.
    Above,
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the `phi = iso` level set as a welded triangle mesh.
///
/// Corners with `phi == iso` count as outside. Faces are wound so that their
/// normals point out of the interior.
pub fn marching_cubes(phi: &ScalarField, iso: f64, inside: InsideSign) -> Result<TriangleMesh> {
    let grid = phi.grid;
    let n = grid.nodes();
    let sign = match inside {
        InsideSign::Below => 1.0,
        InsideSign::Above => -1.0,
    };
    let f: Vec<f64> = phi.values.iter().map(|v| sign * (v - iso)).collect();

    // one welded vertex per (lower node, axis)
    let mut edge_vertex = vec![u32::MAX; grid.node_count() * 3];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let mut nodes = [0usize; 8];
                let mut cube = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let idx = grid.index(i + off[0], j + off[1], k + off[2]);
                    nodes[c] = idx;
                    if f[idx] < 0.0 {
                        cube |= 1 << c;
                    }
                }
                if cube == 0 || cube == 255 {
                    continue;
                }
                let row = &TRI_TABLE[cube];
                let mut local = [usize::MAX; 12];
                for tri in row.chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let mut face = [0usize; 3];
                    for (slot, &e) in face.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == usize::MAX {
                            let [ca, cb] = EDGES[e];
                            let (mut a, mut b) = (nodes[ca], nodes[cb]);
                            let (oa, ob) = (CORNERS[ca], CORNERS[cb]);
                            let axis = (0..3).find(|&ax| oa[ax] != ob[ax]).unwrap();
                            if oa[axis] > ob[axis] {
                                std::mem::swap(&mut a, &mut b);
                            }
                            let key = a * 3 + axis;
                            if edge_vertex[key] == u32::MAX {
                                let t = -f[a] / (f[b] - f[a]);
                                let pa = node_point(&grid, a, n);
                                let pb = node_point(&grid, b, n);
                                edge_vertex[key] = vertices.len() as u32;
                                vertices.push(pa + (pb - pa) * t);
                            }
                            local[e] = edge_vertex[key] as usize;
                        }
                        *slot = local[e];
                    }
                    // the table winds faces toward the interior
                    faces.push([face[0], face[2], face[1]]);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriangleMesh::new(vertices, faces)
}

fn node_point(
    grid: &super::grid::VoxelGrid,
    idx: usize,
    n: [usize; 3],
) -> nalgebra::Point3<f64> {
    grid.node_position(idx % n[0], (idx / n[0]) % n[1], idx / (n[0] * n[1]))
}

#[cfg(test)]
mod tests {
    use super::super::grid::VoxelGrid;
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn signed_tetra_volume(m: &TriangleMesh) -> f64 {
        m.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| m.vertices[i].coords);
                a.dot(&(b - a).cross(&(c - a))) / 6.0
            })
            .sum()
    }

    fn sphere_field(r: f64, n: usize) -> ScalarField {
        let h = 2.0 / n as f64;
        let g = VoxelGrid::new(Point3::new(-1.0, -1.0, -1.0), h, [n, n, n]).unwrap();
        ScalarField::from_fn(g, |p| p.coords.norm() - r)
    }

    #[test]
    fn sphere_sdf() {
        let r = 0.6;
        let phi = sphere_field(r, 48);
        let h = phi.grid.spacing;
        let m = marching_cubes(&phi, 0.0, InsideSign::Below).unwrap();
        for v in &m.vertices {
            let rad = v.coords.norm();
            assert!(rad >= r - h && rad <= r + h);
        }
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        // outward winding gives positive enclosed volume
        let vol = signed_tetra_volume(&m);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.02, "{vol} vs {exact}");
        for (k, f) in m.faces.iter().enumerate() {
            let c = (m.vertices[f[0]].coords + m.vertices[f[1]].coords + m.vertices[f[2]].coords) / 3.0;
            assert!(m.face_cross(k).dot(&c) > 0.0);
        }
    }

    #[test]
    fn inverted_sign_flips_winding() {
        let phi = sphere_field(0.5, 24);
        let neg = ScalarField::new(phi.grid, phi.values.iter().map(|v| -v).collect()).unwrap();
        let below = marching_cubes(&phi, 0.0, InsideSign::Below).unwrap();
        let above = marching_cubes(&neg, 0.0, InsideSign::Above).unwrap();
        assert_eq!(below, above);
    }

    #[test]
    fn vertices_are_welded() {
        let m = marching_cubes(&sphere_field(0.4567, 20), 0.0, InsideSign::Below).unwrap();
        let mut keys: Vec<_> = m
            .vertices
            .iter()
            .map(|p| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits()))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), m.vertices.len());
    }

    #[test]
    fn linear_field_gives_plane() {
        let g = VoxelGrid::new(Point3::new(0.0, 0.0, 0.0), 0.1, [10, 6, 7]).unwrap();
        let phi = ScalarField::from_fn(g, |p| p.x - 0.53);
        let m = marching_cubes(&phi, 0.0, InsideSign::Below).unwrap();
        for v in &m.vertices {
            assert!((v.x - 0.53).abs() < 1e-6);
        }
        // interior is x < 0.53, so normals face +x
        for k in 0..m.faces.len() {
            assert!(m.face_cross(k).dot(&Vector3::x()) > 0.0);
        }
    }

    #[test]
    fn no_crossing_is_an_error() {
        let g = VoxelGrid::new(Point3::origin(), 0.1, [4, 4, 4]).unwrap();
        let phi = ScalarField::from_fn(g, |p| 1.0 + p.x);
        assert!(matches!(
            marching_cubes(&phi, 0.0, InsideSign::Below),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn constant_shift_keeps_vertices() {
        let phi = sphere_field(0.45, 24);
        let a = marching_cubes(&phi, 0.1, InsideSign::Below).unwrap();
        let b = marching_cubes(&phi.offset(0.75), 0.85, InsideSign::Below).unwrap();
        assert_eq!(a.faces, b.faces);
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            assert!((p - q).norm() < 1e-12);
        }
    }
}
