use nalgebra::Vector3;
use rayon::prelude::*;

use super::{backproject_pixel, CameraIntrinsics, DepthImage, OrientedPointCloud};
use crate::error::{Error, Result};

/// How the normal is assembled from the pixel-space depth gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalModel {
    /// `(-dz/dx, -dz/dy, 1)` with `dz/dx = (fu/z) dz/du`, `dz/dy = (fv/z) dz/dv`.
    /// Exact only where `(u-cu) dz/du + (v-cv) dz/dv = 0`, e.g. on the
    /// principal ray or for fronto-parallel surfaces.
    ChainRule,
    /// Chain-rule components plus the perspective term
    /// `((u-cu) dz/du + (v-cv) dz/dv) / z` in the z component. This is the
    /// exact normal of the backprojected surface.
    #[default]
    Perspective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    /// Neighbors whose depth differs by more than this (meters) are not used
    /// for differencing, and pixels whose gradient exceeds it are dropped.
    pub jump_threshold: f64,
    pub model: NormalModel,
}

impl Default for NormalParams {
    fn default() -> Self {
        Self {
            jump_threshold: 0.05,
            model: NormalModel::default(),
        }
    }
}

/// Pixel-space depth gradient `(dz/du, dz/dv)` by finite differences.
///
/// Central differences where both neighbors on an axis are valid, one-sided
/// differences otherwise.
pub fn depth_gradient(d: &DepthImage, u: usize, v: usize) -> Result<(f64, f64)> {
    gradient_with_threshold(d, u, v, f64::INFINITY)
}

fn gradient_with_threshold(d: &DepthImage, u: usize, v: usize, jump: f64) -> Result<(f64, f64)> {
    let z = d.get(u, v).ok_or(Error::GradientUndefined { u, v })?;
    let usable = |uu: Option<usize>, vv: Option<usize>| -> Option<f64> {
        let zz = d.get(uu?, vv?)?;
        ((zz - z).abs() <= jump).then_some(zz)
    };
    let du = axis_difference(
        z,
        usable(u.checked_sub(1), Some(v)),
        usable(u.checked_add(1), Some(v)),
    )
    .ok_or(Error::GradientUndefined { u, v })?;
    let dv = axis_difference(
        z,
        usable(Some(u), v.checked_sub(1)),
        usable(Some(u), v.checked_add(1)),
    )
    .ok_or(Error::GradientUndefined { u, v })?;
    Ok((du, dv))
}

#[inline]
fn axis_difference(center: f64, prev: Option<f64>, next: Option<f64>) -> Option<f64> {
    match (prev, next) {
        (Some(a), Some(b)) => Some(0.5 * (b - a)),
        (None, Some(b)) => Some(b - center),
        (Some(a), None) => Some(center - a),
        (None, None) => None,
    }
}

/// Backprojects every pixel with a defined gradient and attaches a unit,
/// camera-facing normal.
pub fn estimate_normals(
    d: &DepthImage,
    k: &CameraIntrinsics,
    params: &NormalParams,
) -> Result<OrientedPointCloud> {
    let rows: Vec<Vec<(nalgebra::Point3<f64>, Vector3<f64>)>> = (0..d.height())
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::new();
            for u in 0..d.width() {
                let Some(z) = d.get(u, v) else { continue };
                let Ok((zu, zv)) = gradient_with_threshold(d, u, v, params.jump_threshold) else {
                    continue;
                };
                if zu.abs() > params.jump_threshold || zv.abs() > params.jump_threshold {
                    continue;
                }
                let (uf, vf) = (u as f64, v as f64);
                let zx = k.fu / z * zu;
                let zy = k.fv / z * zv;
                let nz = match params.model {
                    NormalModel::ChainRule => 1.0,
                    NormalModel::Perspective => {
                        1.0 + ((uf - k.cu) * zu + (vf - k.cv) * zv) / z
                    }
                };
                // (-zx, -zy, nz) points away from the camera; flip to face it.
                let n = Vector3::new(zx, zy, -nz);
                let len = n.norm();
                if !(len > 0.0 && len.is_finite()) {
                    continue;
                }
                let p = backproject_pixel(uf, vf, z, k).expect("valid pixel has positive depth");
                row.push((p, n / len));
            }
            row
        })
        .collect();

    let (points, normals): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(OrientedPointCloud {
        points,
        normals,
        colors: None,
    })
}

/// Edge-aware Gaussian smoothing of a depth image.
///
/// Each valid pixel becomes the Gaussian-weighted mean of the valid pixels in a
/// `3 sigma` window whose depth is within `jump_threshold` of its own. Invalid
/// pixels stay invalid. `sigma <= 0` returns a copy.
pub fn smooth_depth(d: &DepthImage, sigma: f64, jump_threshold: f64) -> DepthImage {
    if sigma <= 0.0 {
        return d.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let (w, h) = (d.width() as isize, d.height() as isize);
    let out: Vec<f64> = (0..d.height())
        .into_par_iter()
        .flat_map_iter(|v| {
            let kernel = &kernel;
            (0..d.width()).map(move |u| {
                let Some(z) = d.get(u, v) else { return 0.0 };
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for dv in -radius..=radius {
                    let vv = v as isize + dv;
                    if vv < 0 || vv >= h {
                        continue;
                    }
                    let kv = kernel[(dv + radius) as usize];
                    for du in -radius..=radius {
                        let uu = u as isize + du;
                        if uu < 0 || uu >= w {
                            continue;
                        }
                        if let Some(zz) = d.get(uu as usize, vv as usize) {
                            if (zz - z).abs() <= jump_threshold {
                                let wt = kv * kernel[(du + radius) as usize];
                                acc += wt * zz;
                                wsum += wt;
                            }
                        }
                    }
                }
                acc / wsum
            })
        })
        .collect();
    DepthImage::from_depths(d.width(), d.height(), out).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 480.0, 31.5, 23.5).unwrap()
    }

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> DepthImage {
        let data = (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        DepthImage::from_depths(w, h, data).unwrap()
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let d = image(8, 6, |_, _| 1.0);
        for v in 0..6 {
            for u in 0..8 {
                assert_eq!(depth_gradient(&d, u, v).unwrap(), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn linear_in_u_interior() {
        let d = image(10, 10, |u, _| 1.0 + 0.001 * u as f64);
        let (gu, gv) = depth_gradient(&d, 5, 5).unwrap();
        assert!((gu - 0.001).abs() < 1e-12);
        assert_eq!(gv, 0.0);
    }

    #[test]
    fn linear_in_v_forward_difference_at_border() {
        let d = image(10, 10, |_, v| 1.0 + 0.002 * v as f64);
        let (_, gv) = depth_gradient(&d, 4, 0).unwrap();
        assert!((gv - 0.002).abs() < 1e-12);
    }

    #[test]
    fn isolated_pixel_is_rejected() {
        let d = image(5, 5, |u, v| if (u, v) == (2, 2) { 1.0 } else { 0.0 });
        assert!(matches!(
            depth_gradient(&d, 2, 2),
            Err(Error::GradientUndefined { u: 2, v: 2 })
        ));
        // valid along u only
        let d = image(5, 5, |u, v| if v == 2 && (1..=3).contains(&u) { 1.0 } else { 0.0 });
        assert!(depth_gradient(&d, 2, 2).is_err());
    }

    #[test]
    fn fronto_parallel_normals_face_camera() {
        let d = image(16, 12, |_, _| 1.0);
        let cloud = estimate_normals(&d, &k(), &NormalParams::default()).unwrap();
        assert_eq!(cloud.len(), 16 * 12);
        for n in &cloud.normals {
            assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn empty_image_gives_empty_cloud_error() {
        let d = DepthImage::empty(4, 4);
        assert!(matches!(
            estimate_normals(&d, &k(), &NormalParams::default()),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn depth_jumps_are_not_differenced() {
        // left half at 1 m, right half at 2 m
        let d = image(12, 8, |u, _| if u < 6 { 1.0 } else { 2.0 });
        let cloud = estimate_normals(&d, &k(), &NormalParams::default()).unwrap();
        assert_eq!(cloud.len(), 12 * 8);
        for n in &cloud.normals {
            assert!((n.z + 1.0).abs() < 1e-12);
        }
    }

    /// Exact surface normal from the cross product of the backprojection's
    /// tangent vectors, with analytic depth derivatives.
    fn cross_product_normal(
        k: &CameraIntrinsics,
        u: f64,
        v: f64,
        z: f64,
        zu: f64,
        zv: f64,
    ) -> Vector3<f64> {
        let du = Vector3::new(z / k.fu + (u - k.cu) * zu / k.fu, (v - k.cv) * zu / k.fv, zu);
        let dv = Vector3::new((u - k.cu) * zv / k.fu, z / k.fv + (v - k.cv) * zv / k.fv, zv);
        let n = du.cross(&dv).normalize();
        let x = Vector3::new((u - k.cu) * z / k.fu, (v - k.cv) * z / k.fv, z);
        if n.dot(&x) > 0.0 {
            -n
        } else {
            n
        }
    }

    #[test]
    fn affine_depth_matches_tangent_cross_product() {
        let k = k();
        let (a, b, c) = (0.9, 0.004, -0.003);
        let d = image(64, 48, |u, v| a + b * u as f64 + c * v as f64);
        let cloud = estimate_normals(&d, &k, &NormalParams::default()).unwrap();
        let mut checked = 0;
        for (p, n) in cloud.points.iter().zip(&cloud.normals) {
            let (u, v, z) = k.project(p);
            let (ui, vi) = (u.round() as usize, v.round() as usize);
            if ui == 0 || vi == 0 || ui == 63 || vi == 47 {
                continue;
            }
            let expect = cross_product_normal(&k, u, v, z, b, c);
            let angle = n.dot(&expect).clamp(-1.0, 1.0).acos();
            assert!(angle < 1e-6, "angle {angle} at ({u},{v})");
            checked += 1;
        }
        assert_eq!(checked, 62 * 46);
    }

    #[test]
    fn chain_rule_model_agrees_on_principal_ray() {
        let k = CameraIntrinsics::new(500.0, 500.0, 10.0, 10.0).unwrap();
        let d = image(21, 21, |u, v| 1.0 + 0.01 * u as f64 + 0.02 * v as f64);
        let params = |model| NormalParams {
            model,
            ..NormalParams::default()
        };
        let a = estimate_normals(&d, &k, &params(NormalModel::ChainRule)).unwrap();
        let b = estimate_normals(&d, &k, &params(NormalModel::Perspective)).unwrap();
        let center = 10 * 21 + 10;
        assert!((a.normals[center] - b.normals[center]).norm() < 1e-12);
        // off-axis the two differ
        assert!((a.normals[0] - b.normals[0]).norm() > 1e-3);
    }

    #[test]
    fn normals_unit_and_camera_facing() {
        let k = k();
        let d = image(64, 48, |u, v| {
            let (x, y) = (u as f64 - 32.0, v as f64 - 24.0);
            1.0 + 1e-4 * (x * x + 0.5 * y * y) + 0.002 * x
        });
        let cloud = estimate_normals(&d, &k, &NormalParams::default()).unwrap();
        for (p, n) in cloud.points.iter().zip(&cloud.normals) {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            assert!(n.dot(&(p - Point3::origin()).normalize()) < 0.0);
        }
    }

    #[test]
    fn smoothing_preserves_constant_and_respects_jumps() {
        let d = image(20, 10, |u, _| if u < 10 { 1.0 } else { 1.5 });
        let s = smooth_depth(&d, 2.0, 0.05);
        for (a, b) in d.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(smooth_depth(&d, 0.0, 0.05), d);
    }
}
