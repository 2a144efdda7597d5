use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::rgbd::OrientedPointCloud;

/// Regular lattice of `(dims + 1)` nodes per axis with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Point3<f64>,
    pub spacing: f64,
    /// Cell counts per axis.
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(origin: Point3<f64>, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing {spacing}")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 cells per axis, got {dims:?}"
            )));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    /// Grid over `[lo, hi]` dilated by 10% of the longest side (at least four
    /// cells) on every side, with `resolution` cells along the longest padded
    /// axis.
    pub fn covering(lo: &Point3<f64>, hi: &Point3<f64>, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!("grid resolution {resolution}")));
        }
        let ext = hi - lo;
        let longest = ext.max();
        if !(longest > 0.0 && longest.is_finite()) {
            return Err(Error::InvalidParameter("degenerate bounding box".into()));
        }
        let res = resolution as f64;
        // pad = max(0.1 L, 4 h) with h = (L + 2 pad) / res
        let mut h = 1.2 * longest / res;
        if 0.1 * longest < 4.0 * h {
            if resolution <= 8 {
                return Err(Error::InvalidParameter(format!(
                    "grid resolution {resolution} leaves no room for 4-cell padding"
                )));
            }
            h = longest / (res - 8.0);
        }
        let pad = (0.1 * longest).max(4.0 * h);
        let center = lo + ext / 2.0;
        let mut dims = [0usize; 3];
        let mut origin = Point3::origin();
        for a in 0..3 {
            dims[a] = (((ext[a] + 2.0 * pad) / h).ceil() as usize).clamp(2, resolution);
            origin[a] = center[a] - dims[a] as f64 * h / 2.0;
        }
        Self::new(origin, h, dims)
    }

    #[inline]
    pub fn nodes(&self) -> [usize; 3] {
        [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1]
    }

    pub fn node_count(&self) -> usize {
        let n = self.nodes();
        n[0] * n[1] * n[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes();
        i + n[0] * (j + n[1] * k)
    }

    #[inline]
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn max_corner(&self) -> Point3<f64> {
        self.origin
            + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
                * self.spacing
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let hi = self.max_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// The 8 surrounding nodes of `p` with trilinear weights.
    pub fn trilinear(&self, p: &Point3<f64>) -> Result<[(usize, f64); 8]> {
        if !self.contains(p) {
            return Err(Error::OutOfDomain {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.spacing;
            let c = (t.floor() as usize).min(self.dims[a] - 1);
            cell[a] = c;
            frac[a] = t - c as f64;
        }
        let mut out = [(0, 0.0); 8];
        for (corner, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
            *slot = (self.index(cell[0] + di, cell[1] + dj, cell[2] + dk), w);
        }
        Ok(out)
    }
}

/// One 3-vector per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3 {
    pub grid: VoxelGrid,
    pub values: Vec<Vector3<f64>>,
}

impl VectorField3 {
    pub fn zeros(grid: VoxelGrid) -> Self {
        Self {
            values: vec![Vector3::zeros(); grid.node_count()],
            grid,
        }
    }

    pub fn from_fn(grid: VoxelGrid, f: impl Fn(Point3<f64>) -> Vector3<f64>) -> Self {
        let n = grid.nodes();
        let mut values = Vec::with_capacity(grid.node_count());
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    values.push(f(grid.node_position(i, j, k)));
                }
            }
        }
        Self { grid, values }
    }
}

/// One scalar per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: VoxelGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: VoxelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("scalar field has non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: VoxelGrid, f: impl Fn(Point3<f64>) -> f64) -> Self {
        let n = grid.nodes();
        let mut values = Vec::with_capacity(grid.node_count());
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    values.push(f(grid.node_position(i, j, k)));
                }
            }
        }
        Self { grid, values }
    }

    /// Trilinear interpolation at `p`.
    pub fn sample(&self, p: &Point3<f64>) -> Result<f64> {
        Ok(self
            .grid
            .trilinear(p)?
            .iter()
            .map(|&(i, w)| w * self.values[i])
            .sum())
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn offset(&self, k: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v + k).collect(),
        }
    }
}

/// Distributes each unit normal to its 8 surrounding nodes with trilinear
/// weights; every node holds the weight-normalized mean of its contributions,
/// or zero if it received no weight.
pub fn splat_normals(cloud: &OrientedPointCloud, grid: &VoxelGrid) -> Result<VectorField3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut sum = vec![Vector3::zeros(); grid.node_count()];
    let mut weight = vec![0.0; grid.node_count()];
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        for (i, w) in grid.trilinear(p)? {
            sum[i] += w * n;
            weight[i] += w;
        }
    }
    let values = sum
        .into_iter()
        .zip(weight)
        .map(|(s, w)| if w > 0.0 { s / w } else { Vector3::zeros() })
        .collect();
    Ok(VectorField3 {
        grid: *grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VoxelGrid {
        VoxelGrid::new(Point3::new(-1.0, -1.0, -1.0), 0.5, [4, 4, 4]).unwrap()
    }

    fn single(p: Point3<f64>, n: Vector3<f64>) -> OrientedPointCloud {
        OrientedPointCloud::new(vec![p], vec![n]).unwrap()
    }

    #[test]
    fn point_on_node() {
        let g = grid();
        let n = Vector3::new(0.0, 0.6, 0.8);
        let v = splat_normals(&single(Point3::new(0.0, 0.5, -0.5), n), &g).unwrap();
        let target = g.index(2, 3, 1);
        for (i, val) in v.values.iter().enumerate() {
            if i == target {
                assert!((val - n).norm() < 1e-15);
            } else {
                assert_eq!(*val, Vector3::zeros());
            }
        }
    }

    #[test]
    fn point_at_cell_center() {
        let g = grid();
        let n = Vector3::new(1.0, 0.0, 0.0);
        let p = Point3::new(0.25, 0.25, 0.25);
        let w = g.trilinear(&p).unwrap();
        for (_, wt) in w {
            assert!((wt - 0.125).abs() < 1e-15);
        }
        let v = splat_normals(&single(p, n), &g).unwrap();
        let touched: Vec<_> = v.values.iter().filter(|x| x.norm() > 0.0).collect();
        assert_eq!(touched.len(), 8);
        for t in touched {
            assert!((t - n).norm() < 1e-15);
        }
    }

    #[test]
    fn opposite_normals_cancel() {
        let g = grid();
        let p = Point3::new(0.1, 0.2, 0.3);
        let c = OrientedPointCloud::new(vec![p, p], vec![Vector3::z(), -Vector3::z()]).unwrap();
        let v = splat_normals(&c, &g).unwrap();
        assert!(v.values.iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn out_of_domain() {
        let g = grid();
        let c = single(Point3::new(1.5, 0.0, 0.0), Vector3::x());
        assert!(matches!(splat_normals(&c, &g), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn covering_pads_bounds() {
        let lo = Point3::new(0.0, 0.0, 0.0);
        let hi = Point3::new(1.0, 0.5, 0.25);
        let g = VoxelGrid::covering(&lo, &hi, 64).unwrap();
        assert!(g.dims[0] <= 64);
        for a in 0..3 {
            assert!(lo[a] - g.origin[a] >= 4.0 * g.spacing - 1e-12);
            assert!(g.max_corner()[a] - hi[a] >= 4.0 * g.spacing - 1e-12);
        }
        let small = VoxelGrid::covering(&lo, &hi, 16).unwrap();
        assert!(lo[0] - small.origin[0] >= 4.0 * small.spacing - 1e-12);
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        let g = grid();
        let f = ScalarField::from_fn(g, |p| 2.0 * p.x - p.y + 0.5 * p.z + 3.0);
        let p = Point3::new(0.123, -0.77, 0.9);
        let expect = 2.0 * p.x - p.y + 0.5 * p.z + 3.0;
        assert!((f.sample(&p).unwrap() - expect).abs() < 1e-12);
    }
}
