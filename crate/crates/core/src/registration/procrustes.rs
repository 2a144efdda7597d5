use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use super::RigidMotion;
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which the moving set counts as collinear.
const COLLINEAR_TOL: f64 = 1e-12;

/// Least-squares rigid motion `g` minimizing `sum |x0 - R x1 - t|^2` over the
/// pairs `(x0, x1)`.
///
/// Both sets are centered, `H = sum (x0 - mean0)(x1 - mean1)^T` is decomposed
/// as `U S V^T`, and `R = U diag(1, 1, det(U V^T)) V^T`, which is always a
/// proper rotation.
pub fn solve_rigid_procrustes(pairs: &[(Point3<f64>, Point3<f64>)]) -> Result<RigidMotion> {
    if pairs.len() < 3 {
        return Err(Error::Arity {
            required: 3,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let mean0 = pairs.iter().fold(Vector3::zeros(), |acc, (a, _)| acc + a.coords) / n;
    let mean1 = pairs.iter().fold(Vector3::zeros(), |acc, (_, b)| acc + b.coords) / n;

    let mut h = Matrix3::zeros();
    let mut scatter1 = Matrix3::zeros();
    for (a, b) in pairs {
        let a = a.coords - mean0;
        let b = b.coords - mean1;
        h += a * b.transpose();
        scatter1 += b * b.transpose();
    }

    let eig = SymmetricEigen::new(scatter1).eigenvalues;
    let mut ev = [eig[0], eig[1], eig[2]];
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= COLLINEAR_TOL * ev[0] {
        return Err(Error::RankDeficient);
    }

    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let d = (u * v_t).determinant().signum();
    // flip the direction belonging to the smallest singular value
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(2);
    let mut diag = Vector3::repeat(1.0);
    diag[smallest] = d;
    let rotation = u * Matrix3::from_diagonal(&diag) * v_t;
    let translation = mean0 - rotation * mean1;
    Ok(RigidMotion {
        rotation,
        translation,
    })
}

/// `sum 1/2 |x0 - R x1 - t|^2`.
pub fn procrustes_residual(pairs: &[(Point3<f64>, Point3<f64>)], g: &RigidMotion) -> f64 {
    pairs
        .iter()
        .map(|(a, b)| 0.5 * (a - g.apply_point(b)).norm_squared())
        .sum()
}
