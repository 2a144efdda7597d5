use nalgebra::Vector3;
use rayon::prelude::*;

use super::mesh::TriangleMesh;

/// Per-vertex unit normals with bookkeeping for vertices that get none.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vector3<f64>>,
    /// Vertices whose incident face normals cancel; their normal is zero.
    pub flagged: Vec<usize>,
    /// Vertices not referenced by any face.
    pub isolated: usize,
    /// Faces with zero area; they contribute nothing.
    pub degenerate_faces: usize,
}

/// Normalized sum of the unit normals of the incident faces.
pub fn vertex_normals(mesh: &TriangleMesh) -> VertexNormals {
    let mut sum = vec![Vector3::zeros(); mesh.vertices.len()];
    let mut used = vec![false; mesh.vertices.len()];
    let mut degenerate_faces = 0;
    for (k, f) in mesh.faces.iter().enumerate() {
        for &i in f {
            used[i] = true;
        }
        let c = mesh.face_cross(k);
        let len = c.norm();
        if len == 0.0 || !len.is_finite() {
            degenerate_faces += 1;
            continue;
        }
        let n = c / len;
        for &i in f {
            sum[i] += n;
        }
    }
    let mut flagged = Vec::new();
    let mut isolated = 0;
    let normals = sum
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let len = s.norm();
            if !used[i] {
                isolated += 1;
                Vector3::zeros()
            } else if len < 1e-12 {
                flagged.push(i);
                Vector3::zeros()
            } else {
                s / len
            }
        })
        .collect();
    VertexNormals {
        normals,
        flagged,
        isolated,
        degenerate_faces,
    }
}

/// The linear vector field with unit divergence used in the flux integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FlowField {
    /// `v(x) = (x, 0, 0)`: no flux through planes `y = const` or `z = const`.
    #[default]
    X,
    /// `v(x) = (0, y, 0)`.
    Y,
    /// `v(x) = (0, 0, z)`.
    Z,
}

impl FlowField {
    #[inline]
    fn axis(self) -> usize {
        match self {
            FlowField::X => 0,
            FlowField::Y => 1,
            FlowField::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceVolume {
    pub volume: f64,
    pub flagged_vertices: usize,
    pub degenerate_faces: usize,
}

/// Flux of `flow` through the mesh with the three-corner rule
/// `Σ_T A(T)/3 Σ_i <v(x_i), n_i>` on averaged vertex normals.
pub fn mesh_volume_divergence_with(mesh: &TriangleMesh, flow: FlowField) -> DivergenceVolume {
    let vn = vertex_normals(mesh);
    if !vn.flagged.is_empty() {
        log::warn!("{} vertices with cancelling normals excluded", vn.flagged.len());
    }
    let a = flow.axis();
    let per_face: Vec<f64> = mesh
        .faces
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let area = mesh.face_area(k);
            let t = f.map(|i| mesh.vertices[i][a] * vn.normals[i][a]);
            // grouped so that reversing the winding negates the sum exactly
            area / 3.0 * (t[0] + (t[1] + t[2]))
        })
        .collect();
    DivergenceVolume {
        volume: per_face.iter().sum(),
        flagged_vertices: vn.flagged.len(),
        degenerate_faces: vn.degenerate_faces,
    }
}

/// Divergence-theorem volume with `v = (x, 0, 0)`. Valid for closed
/// outward-wound meshes, and for meshes open only in a plane `z = const`.
pub fn mesh_volume_divergence(mesh: &TriangleMesh) -> f64 {
    if mesh.is_empty() {
        log::warn!("volume of an empty mesh");
    }
    mesh_volume_divergence_with(mesh, FlowField::X).volume
}

/// Sum of signed tetrahedra spanned by each face and the origin. Exact for
/// closed polyhedra; meaningless on open meshes.
pub fn mesh_volume_tetrahedra(mesh: &TriangleMesh) -> f64 {
    let per_face: Vec<f64> = mesh
        .faces
        .par_iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| mesh.vertices[i].coords);
            a.dot(&(b - a).cross(&(c - a))) / 6.0
        })
        .collect();
    per_face.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{cube_mesh, icosphere, CubeStyle};
    use super::*;
    use nalgebra::Point3;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn single_triangle_normals() {
        let m = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for n in vertex_normals(&m).normals {
            assert_eq!(n, Vector3::z());
        }
    }

    #[test]
    fn cube_corner_normal() {
        // three unit faces meeting at the origin corner, wound outward from
        // the cube [-1, 0]^3
        let m = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(0.0, -1.0, 0.0),
                Point3::new(0.0, 0.0, -1.0),
                Point3::new(-1.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 1]],
        )
        .unwrap();
        let n = vertex_normals(&m).normals[0];
        let expect = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert!((n - expect).norm() < 1e-12, "{n}");
    }

    #[test]
    fn cancelling_normals_are_flagged() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(5.0, 5.0, 5.0),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 1]]).unwrap();
        let vn = vertex_normals(&m);
        assert_eq!(vn.flagged, vec![0, 1, 2]);
        assert_eq!(vn.isolated, 1);
        assert!(vn.normals.iter().all(|n| *n == Vector3::zeros()));
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(Point3::origin(), 0.1, 4);
        for (p, n) in m.vertices.iter().zip(vertex_normals(&m).normals) {
            let angle = n.angle(&p.coords);
            assert!(angle.to_degrees() < 2.0);
        }
    }

    #[test]
    fn tetrahedra_exact_on_cube() {
        let c = cube_mesh(Point3::origin(), 1.0, 1, CubeStyle::Welded, false);
        assert!((mesh_volume_tetrahedra(&c) - 1.0).abs() < 1e-15);
        let far = c.translated(Vector3::new(10.0, 10.0, 10.0));
        assert!((mesh_volume_tetrahedra(&far) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_on_closed_fixtures() {
        let cube = cube_mesh(Point3::origin(), 1.0, 64, CubeStyle::Welded, false);
        assert!(rel(mesh_volume_divergence(&cube), 1.0) < 1e-2);
        let sphere = icosphere(Point3::origin(), 0.1, 4);
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 1e-3;
        assert!(rel(mesh_volume_divergence(&sphere), exact) < 5e-3);
        let tet = mesh_volume_tetrahedra(&sphere);
        assert!(tet < exact && rel(tet, exact) < 5e-3);
    }

    #[test]
    fn flipping_negates_exactly() {
        for m in [
            cube_mesh(Point3::new(0.2, -0.1, 0.3), 0.7, 3, CubeStyle::Welded, false),
            icosphere(Point3::new(0.1, 0.2, 0.3), 0.4, 2),
        ] {
            let f = m.flipped();
            assert_eq!(mesh_volume_divergence(&f), -mesh_volume_divergence(&m));
            assert_eq!(mesh_volume_tetrahedra(&f), -mesh_volume_tetrahedra(&m));
        }
    }

    #[test]
    fn faceted_cube_is_exact() {
        let c = cube_mesh(Point3::new(1.0, 2.0, 0.0), 0.5, 2, CubeStyle::Faceted, false);
        assert!(rel(mesh_volume_divergence(&c), 0.125) < 1e-12);
    }

    #[test]
    fn flow_variants_agree_on_closed_meshes() {
        let m = icosphere(Point3::new(0.3, -0.2, 0.5), 0.2, 3);
        let x = mesh_volume_divergence_with(&m, FlowField::X).volume;
        for flow in [FlowField::Y, FlowField::Z] {
            assert!(rel(mesh_volume_divergence_with(&m, flow).volume, x) < 1e-2);
        }
    }

    #[test]
    fn translation_drift_is_small() {
        let m = icosphere(Point3::origin(), 0.1, 4);
        let v0 = mesh_volume_divergence(&m);
        let v1 = mesh_volume_divergence(&m.translated(Vector3::new(10.0, 0.0, 0.0)));
        assert!(rel(v1, v0) < 1e-2, "{v0} {v1}");
    }
}
