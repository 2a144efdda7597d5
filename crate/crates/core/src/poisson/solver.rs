use rayon::prelude::*;

use super::grid::{ScalarField, VectorField3, VoxelGrid};
use crate::error::{Error, Result};
use crate::rgbd::OrientedPointCloud;

/// Fixed chunk length for reductions, so sums do not depend on thread count.
const REDUCE_CHUNK: usize = 4096;

/// A field on the grid edges. `values[a][node]` is the value on the edge from
/// `node` to its `+a` neighbor; slots of nodes on the upper `a` face are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub grid: VoxelGrid,
    pub values: [Vec<f64>; 3],
}

impl EdgeField {
    pub fn zeros(grid: VoxelGrid) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            values: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Whether `node` has an edge along `axis`.
    #[inline]
    pub fn has_edge(grid: &VoxelGrid, axis: usize, node: usize) -> bool {
        let n = grid.nodes();
        let coord = match axis {
            0 => node % n[0],
            1 => (node / n[0]) % n[1],
            _ => node / (n[0] * n[1]),
        };
        coord + 1 < n[axis]
    }

    pub fn dot(&self, other: &EdgeField) -> f64 {
        (0..3).map(|a| dot(&self.values[a], &other.values[a])).sum()
    }
}

#[inline]
fn strides(grid: &VoxelGrid) -> [usize; 3] {
    let n = grid.nodes();
    [1, n[0], n[0] * n[1]]
}

#[inline]
fn coords(grid: &VoxelGrid, node: usize) -> [usize; 3] {
    let n = grid.nodes();
    [node % n[0], (node / n[0]) % n[1], node / (n[0] * n[1])]
}

/// Forward-difference gradient on edges.
pub fn gradient(phi: &ScalarField) -> EdgeField {
    let grid = phi.grid;
    let s = strides(&grid);
    let n = grid.nodes();
    let h = grid.spacing;
    let mut out = EdgeField::zeros(grid);
    for (a, vals) in out.values.iter_mut().enumerate() {
        vals.par_iter_mut().enumerate().for_each(|(node, e)| {
            if coords(&grid, node)[a] + 1 < n[a] {
                *e = (phi.values[node + s[a]] - phi.values[node]) / h;
            }
        });
    }
    out
}

/// Divergence of an edge field at the nodes; the negative adjoint of
/// [`gradient`], with zero flux through the domain boundary.
pub fn divergence(e: &EdgeField) -> Vec<f64> {
    let grid = e.grid;
    let s = strides(&grid);
    let h = grid.spacing;
    (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let c = coords(&grid, node);
            let mut acc = 0.0;
            for a in 0..3 {
                acc += e.values[a][node];
                if c[a] > 0 {
                    acc -= e.values[a][node - s[a]];
                }
            }
            acc / h
        })
        .collect()
}

/// Samples a node vector field on edges by averaging the two endpoints.
pub fn edge_average(v: &VectorField3) -> EdgeField {
    let grid = v.grid;
    let s = strides(&grid);
    let n = grid.nodes();
    let mut out = EdgeField::zeros(grid);
    for (a, vals) in out.values.iter_mut().enumerate() {
        vals.par_iter_mut().enumerate().for_each(|(node, e)| {
            if coords(&grid, node)[a] + 1 < n[a] {
                *e = 0.5 * (v.values[node][a] + v.values[node + s[a]][a]);
            }
        });
    }
    out
}

/// 7-point Laplacian with homogeneous Neumann boundary (missing neighbors
/// dropped), i.e. `div grad phi`.
pub fn laplacian(phi: &ScalarField) -> Vec<f64> {
    let h2 = phi.grid.spacing * phi.grid.spacing;
    let mut out = vec![0.0; phi.values.len()];
    apply_graph_laplacian(&phi.grid, &phi.values, &mut out);
    out.iter_mut().for_each(|x| *x /= -h2);
    out
}

/// `out = K x` with `(K x)_i = sum over neighbors j of (x_i - x_j)`.
fn apply_graph_laplacian(grid: &VoxelGrid, x: &[f64], out: &mut [f64]) {
    let n = grid.nodes();
    let s = strides(grid);
    out.par_chunks_mut(s[2]).enumerate().for_each(|(k, slab)| {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let local = i + n[0] * j;
                let node = local + k * s[2];
                let c = x[node];
                let mut acc = 0.0;
                if i > 0 {
                    acc += c - x[node - 1];
                }
                if i + 1 < n[0] {
                    acc += c - x[node + 1];
                }
                if j > 0 {
                    acc += c - x[node - s[1]];
                }
                if j + 1 < n[1] {
                    acc += c - x[node + s[1]];
                }
                if k > 0 {
                    acc += c - x[node - s[2]];
                }
                if k + 1 < n[2] {
                    acc += c - x[node + s[2]];
                }
                slab[local] = acc;
            }
        }
    });
}

fn degree(grid: &VoxelGrid, node: usize) -> f64 {
    let n = grid.nodes();
    let c = coords(grid, node);
    (0..3)
        .map(|a| (c[a] > 0) as usize + (c[a] + 1 < n[a]) as usize)
        .sum::<usize>() as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

fn mean(a: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(REDUCE_CHUNK).map(|x| x.iter().sum()).collect();
    partial.iter().sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct PoissonParams {
    /// Weight of the point-value screening term; 0 gives the plain Poisson
    /// problem.
    pub screening_alpha: f64,
    /// Relative residual `|r| / |b|` at which CG stops.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            screening_alpha: 4.0,
            cg_tol: 1e-7,
            cg_max_iters: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub field: ScalarField,
    pub iterations: usize,
    /// Relative residual before the first and after every iteration.
    pub residuals: Vec<f64>,
}

/// Minimizes `1/2 ∫ |grad phi - v|^2 + alpha Σ_i w_i phi(x_i)^2` over node
/// values, with `w_i = 1 / |cloud|`.
///
/// The energy is discretized with forward differences on edges (natural
/// Neumann boundary) and trilinear point evaluation. Lengths in the screening
/// term are measured relative to the longest grid extent, which makes the
/// balance between the two terms independent of the scene's metric scale.
/// The normal equations are solved by Jacobi-preconditioned conjugate
/// gradient. Without screening the solution is shifted to zero mean.
pub fn solve_screened_poisson(
    v: &VectorField3,
    cloud: &OrientedPointCloud,
    params: &PoissonParams,
) -> Result<PoissonSolution> {
    let grid = v.grid;
    if v.values.len() != grid.node_count() {
        return Err(Error::GridMismatch("vector field size".into()));
    }
    if params.screening_alpha < 0.0 || !params.screening_alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "screening alpha {}",
            params.screening_alpha
        )));
    }
    let h = grid.spacing;
    let screened = params.screening_alpha > 0.0 && !cloud.is_empty();

    // K phi + beta B^T B phi = -h^2 div v
    let mut rhs: Vec<f64> = divergence(&edge_average(v))
        .into_iter()
        .map(|d| -h * h * d)
        .collect();
    let stencils: Vec<[(usize, f64); 8]> = if screened {
        cloud
            .points
            .par_iter()
            .map(|p| grid.trilinear(p))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let extent = h * *grid.dims.iter().max().unwrap() as f64;
    let beta = if screened {
        2.0 * params.screening_alpha * extent / (cloud.len() as f64 * h)
    } else {
        0.0
    };

    if !screened {
        let m = mean(&rhs);
        rhs.iter_mut().for_each(|x| *x -= m);
    }

    let mut diag: Vec<f64> = (0..grid.node_count()).map(|i| degree(&grid, i)).collect();
    for st in &stencils {
        for &(i, w) in st {
            diag[i] += beta * w * w;
        }
    }

    let apply = |x: &[f64], out: &mut [f64], scratch: &mut Vec<f64>| {
        apply_graph_laplacian(&grid, x, out);
        if screened {
            stencils
                .par_iter()
                .map(|st| st.iter().map(|&(i, w)| w * x[i]).sum::<f64>())
                .collect_into_vec(scratch);
            for (st, &val) in stencils.iter().zip(scratch.iter()) {
                for &(i, w) in st {
                    out[i] += beta * w * val;
                }
            }
        }
    };

    let (mut x, iterations, residuals) =
        conjugate_gradient(&rhs, &diag, apply, !screened, params.cg_tol, params.cg_max_iters)?;
    if !screened {
        let m = mean(&x);
        x.iter_mut().for_each(|v| *v -= m);
    }
    Ok(PoissonSolution {
        field: ScalarField::new(grid, x)?,
        iterations,
        residuals,
    })
}

type CgOutput = (Vec<f64>, usize, Vec<f64>);

fn conjugate_gradient(
    b: &[f64],
    diag: &[f64],
    apply: impl Fn(&[f64], &mut [f64], &mut Vec<f64>),
    project_mean: bool,
    tol: f64,
    max_iters: usize,
) -> Result<CgOutput> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, 0, vec![0.0]));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    if project_mean {
        let m = mean(&z);
        z.iter_mut().for_each(|v| *v -= m);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut scratch = Vec::new();
    let mut rz = dot(&r, &z);
    let mut residuals = vec![1.0];

    for it in 1..=max_iters {
        apply(&p, &mut ap, &mut scratch);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: *residuals.last().unwrap(),
            });
        }
        let step = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        if project_mean {
            let m = mean(&r);
            r.iter_mut().for_each(|v| *v -= m);
        }
        let rel = dot(&r, &r).sqrt() / b_norm;
        residuals.push(rel);
        if rel <= tol {
            return Ok((x, it, residuals));
        }
        z.par_iter_mut()
            .zip(&r)
            .zip(diag)
            .for_each(|((z, r), d)| *z = r / d);
        if project_mean {
            let m = mean(&z);
            z.iter_mut().for_each(|v| *v -= m);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual: *residuals.last().unwrap(),
    })
}

/// Mean of the trilinearly interpolated field at the cloud's points.
pub fn choose_isovalue(phi: &ScalarField, cloud: &OrientedPointCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let vals: Vec<f64> = cloud
        .points
        .par_iter()
        .map(|p| phi.sample(p))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> VoxelGrid {
        VoxelGrid::new(Point3::new(-0.5, -0.4, -0.3), 1.0 / n as f64, [n, n + 1, n + 2]).unwrap()
    }

    #[test]
    fn summation_by_parts() {
        let g = grid(7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let phi = ScalarField::new(
                g,
                (0..g.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let mut e = EdgeField::zeros(g);
            for a in 0..3 {
                for node in 0..g.node_count() {
                    if EdgeField::has_edge(&g, a, node) {
                        e.values[a][node] = rng.random_range(-1.0..1.0);
                    }
                }
            }
            let lhs = dot(&divergence(&e), &phi.values);
            let rhs = -e.dot(&gradient(&phi));
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn laplacian_of_quadratic_interior() {
        let g = grid(8);
        let phi = ScalarField::from_fn(g, |p| p.x * p.x + 2.0 * p.y * p.y - p.z * p.z);
        let lap = laplacian(&phi);
        let n = g.nodes();
        for k in 1..n[2] - 1 {
            for j in 1..n[1] - 1 {
                for i in 1..n[0] - 1 {
                    assert!((lap[g.index(i, j, k)] - 4.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_solution() {
        let g = grid(6);
        let v = VectorField3::zeros(g);
        let params = PoissonParams {
            screening_alpha: 0.0,
            ..PoissonParams::default()
        };
        let sol = solve_screened_poisson(&v, &OrientedPointCloud::default(), &params).unwrap();
        assert!(sol.field.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn linear_potential_is_recovered() {
        let g = grid(16);
        let v = VectorField3::from_fn(g, |_| Vector3::x());
        let tol = 1e-10;
        let params = PoissonParams {
            screening_alpha: 0.0,
            cg_tol: tol,
            cg_max_iters: 10_000,
        };
        let sol = solve_screened_poisson(&v, &OrientedPointCloud::default(), &params).unwrap();
        let grad = gradient(&sol.field);
        let n = g.nodes();
        let mut max_err: f64 = 0.0;
        for k in 1..n[2] - 1 {
            for j in 1..n[1] - 1 {
                for i in 1..n[0] - 1 {
                    let node = g.index(i, j, k);
                    // central difference from the two adjacent edges
                    for a in 0..3 {
                        let back = node - strides(&g)[a];
                        let c = 0.5 * (grad.values[a][node] + grad.values[a][back]);
                        let expect = if a == 0 { 1.0 } else { 0.0 };
                        max_err = max_err.max((c - expect).abs());
                    }
                }
            }
        }
        assert!(max_err < 10.0 * tol * 1.0, "max gradient error {max_err:e}");
        assert!(mean(&sol.field.values).abs() < 1e-12);
    }

    #[test]
    fn residual_history_never_jumps() {
        let g = grid(12);
        let center = Point3::new(0.0, 0.1, 0.2);
        let v = VectorField3::from_fn(g, |p| {
            let d = p - center;
            let r = d.norm();
            if (r - 0.25).abs() < 0.08 {
                d / r
            } else {
                Vector3::zeros()
            }
        });
        let pts: Vec<_> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.7;
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / 200.0;
                let s = (1.0 - z * z).sqrt();
                center + 0.25 * Vector3::new(s * t.cos(), s * t.sin(), z)
            })
            .collect();
        let normals = pts.iter().map(|p| (p - center).normalize()).collect();
        let cloud = OrientedPointCloud::new(pts, normals).unwrap();
        let sol = solve_screened_poisson(&v, &cloud, &PoissonParams::default()).unwrap();
        for w in sol.residuals.windows(2) {
            assert!(w[1] <= 10.0 * w[0]);
        }
        // interior below the level of the samples
        let c = choose_isovalue(&sol.field, &cloud).unwrap();
        assert!(sol.field.sample(&center).unwrap() < c);
    }

    #[test]
    fn harmonic_inside_holes() {
        let g = grid(14);
        // normals only in a slab; the rest of the domain is a hole
        let v = VectorField3::from_fn(g, |p| {
            if p.x.abs() < 0.1 {
                Vector3::new(1.0, 0.3 * p.y, 0.0)
            } else {
                Vector3::zeros()
            }
        });
        let tol = 1e-9;
        let params = PoissonParams {
            screening_alpha: 0.0,
            cg_tol: tol,
            cg_max_iters: 10_000,
        };
        let sol = solve_screened_poisson(&v, &OrientedPointCloud::default(), &params).unwrap();
        let rhs_scale = {
            let d = divergence(&edge_average(&v));
            dot(&d, &d).sqrt()
        };
        let lap = laplacian(&sol.field);
        let s = strides(&g);
        let n = g.nodes();
        let mut checked = 0;
        for node in 0..g.node_count() {
            let c = coords(&g, node);
            // node and all its neighbors carry zero normal
            let mut touched = v.values[node].norm() > 0.0;
            for a in 0..3 {
                if c[a] > 0 {
                    touched |= v.values[node - s[a]].norm() > 0.0;
                }
                if c[a] + 1 < n[a] {
                    touched |= v.values[node + s[a]].norm() > 0.0;
                }
            }
            if !touched {
                assert!(lap[node].abs() / rhs_scale < 10.0 * tol);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn isovalue_of_constant_and_linear_fields() {
        let g = grid(6);
        let pts = vec![Point3::new(0.0, 0.0, 0.3), Point3::new(0.1, -0.2, 0.3)];
        let cloud = OrientedPointCloud::new(pts, vec![Vector3::z(); 2]).unwrap();
        let five = ScalarField::from_fn(g, |_| 5.0);
        assert!((choose_isovalue(&five, &cloud).unwrap() - 5.0).abs() < 1e-12);
        let lin = ScalarField::from_fn(g, |p| p.z);
        assert!((choose_isovalue(&lin, &cloud).unwrap() - 0.3).abs() < 1e-12);
        let shifted = lin.offset(2.5);
        assert!((choose_isovalue(&shifted, &cloud).unwrap() - 2.8).abs() < 1e-12);
    }

    #[test]
    fn cg_failure_is_reported() {
        let g = grid(10);
        let v = VectorField3::from_fn(g, |p| Vector3::new(p.y, -p.x, p.z));
        let params = PoissonParams {
            screening_alpha: 0.0,
            cg_tol: 1e-14,
            cg_max_iters: 2,
        };
        match solve_screened_poisson(&v, &OrientedPointCloud::default(), &params) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
