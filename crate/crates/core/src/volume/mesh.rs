use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::registration::RigidMotion;

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates face indices and rejects faces with a repeated vertex.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (k, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {k} references a vertex out of range"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {k} repeats a vertex")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn corners(&self, face: usize) -> [Point3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i])
    }

    /// `(b - a) x (c - a)`: twice the area times the unit normal.
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Reverses the winding of every face.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
        }
    }

    pub fn transformed(&self, g: &RigidMotion) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| g.apply_point(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn translated(&self, t: Vector3<f64>) -> Self {
        self.transformed(&RigidMotion::from_translation(t))
    }

    /// Number of faces incident to each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges bordering exactly one face, in ascending order.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .edge_face_counts()
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Every edge borders exactly two faces.
    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    /// `V - E + F`, counting only vertices referenced by a face.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        let e = self.edge_face_counts().len() as i64;
        v - e + self.faces.len() as i64
    }

    pub fn mean_edge_length(&self) -> f64 {
        let counts = self.edge_face_counts();
        if counts.is_empty() {
            return 0.0;
        }
        let mut keys: Vec<_> = counts.keys().copied().collect();
        keys.sort_unstable();
        let total: f64 = keys
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum();
        total / keys.len() as f64
    }

    /// Drops vertices not referenced by any face and renumbers.
    pub fn compacted(&self) -> Self {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let faces = self
            .faces
            .iter()
            .map(|f| {
                f.map(|i| {
                    if remap[i] == usize::MAX {
                        remap[i] = vertices.len();
                        vertices.push(self.vertices[i]);
                    }
                    remap[i]
                })
            })
            .collect();
        Self { vertices, faces }
    }

    /// Splits the faces into edge-connected components, largest (by face
    /// count) first.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            let r0 = find(&mut parent, f[0]);
            for &i in &f[1..] {
                let r = find(&mut parent, i);
                if r != r0 {
                    let (lo, hi) = (r.min(r0), r.max(r0));
                    parent[hi] = lo;
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, f) in self.faces.iter().enumerate() {
            let root = find(&mut parent, f[0]);
            groups.entry(root).or_default().push(k);
        }
        let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    /// Merges vertices with bit-identical positions, so that meshes stored
    /// with split creases get their true topology.
    pub fn welded(&self) -> Self {
        let mut index: HashMap<[u64; 3], usize> = HashMap::with_capacity(self.vertices.len());
        let mut vertices = Vec::new();
        let remap: Vec<usize> = self
            .vertices
            .iter()
            .map(|p| {
                let key = [p.x, p.y, p.z].map(|c| (c + 0.0).to_bits());
                *index.entry(key).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() - 1
                })
            })
            .collect();
        let faces = self
            .faces
            .iter()
            .map(|f| f.map(|i| remap[i]))
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        Self { vertices, faces }
    }

    pub fn with_faces(&self, faces: &[usize]) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: faces.iter().map(|&k| self.faces[k]).collect(),
        }
        .compacted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(TriangleMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(vec![Point3::origin(); 3], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn tetrahedron_topology() {
        let t = tetra();
        assert!(t.is_watertight());
        assert_eq!(t.euler_characteristic(), 2);
        assert!(t.boundary_edges().is_empty());
        let open = TriangleMesh::new(t.vertices.clone(), t.faces[1..].to_vec()).unwrap();
        assert_eq!(open.boundary_edges().len(), 3);
        assert!(!open.is_watertight());
    }

    #[test]
    fn components_and_compaction() {
        let t = tetra();
        let mut both = t.clone();
        let shifted = t.translated(Vector3::new(5.0, 0.0, 0.0));
        both.vertices.extend(shifted.vertices);
        both.faces.extend(t.faces.iter().map(|f| f.map(|i| i + 4)));
        both.faces.pop();
        let comps = both.connected_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].len(), 4);
        let first = both.with_faces(&comps[0]);
        assert_eq!(first.vertices.len(), 4);
        assert!(first.is_watertight());
    }
}
