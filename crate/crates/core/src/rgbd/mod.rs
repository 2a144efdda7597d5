//! Depth images, pinhole intrinsics and oriented point clouds.
//!
//! Depth is metric (meters) in a camera frame whose z axis points along the
//! optical axis. Normals are emitted camera-facing, i.e. `<n, x> < 0` for every
//! emitted point `x`.

mod normals;

pub use normals::{
    depth_gradient, estimate_normals, smooth_depth, NormalModel, NormalParams,
};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-pixel metric depth with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthImage {
    /// Builds an image from raw depths. Non-positive and non-finite values are
    /// marked invalid.
    pub fn from_depths(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "depth buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        let valid: Vec<bool> = data.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        let data = data
            .into_iter()
            .zip(&valid)
            .map(|(z, &ok)| if ok { z } else { 0.0 })
            .collect();
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    /// An image of `width x height` invalid pixels.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major depth buffer; invalid pixels hold 0.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height && self.valid[self.index(u, v)]
    }

    /// Depth at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.is_valid(u, v).then(|| self.data[self.index(u, v)])
    }

    /// Sets a pixel; non-positive or non-finite values invalidate it.
    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        let i = self.index(u, v);
        if z.is_finite() && z > 0.0 {
            self.data[i] = z;
            self.valid[i] = true;
        } else {
            self.data[i] = 0.0;
            self.valid[i] = false;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Row-major grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "gray buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }
}

/// Pinhole camera parameters in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fu: f64,
    pub fv: f64,
    pub cu: f64,
    pub cv: f64,
}

impl CameraIntrinsics {
    pub fn new(fu: f64, fv: f64, cu: f64, cv: f64) -> Result<Self> {
        if !(fu > 0.0 && fv > 0.0 && fu.is_finite() && fv.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fu={fu} fv={fv}"
            )));
        }
        if !(cu.is_finite() && cv.is_finite()) {
            return Err(Error::InvalidIntrinsics("principal point must be finite".into()));
        }
        Ok(Self { fu, fv, cu, cv })
    }

    /// Camera-frame point for pixel `(u, v)` at depth `z`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Result<Point3<f64>> {
        backproject_pixel(u, v, z, self)
    }

    /// Pixel coordinates and depth of a camera-frame point.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        (
            self.fu * p.x / p.z + self.cu,
            self.fv * p.y / p.z + self.cv,
            p.z,
        )
    }

    /// Viewing ray direction (not normalized, z component 1) through `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cu) / self.fu, (v - self.cv) / self.fv, 1.0)
    }
}

/// Inverts the pinhole projection for a pixel with known depth.
pub fn backproject_pixel(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Result<Point3<f64>> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidDepth(z));
    }
    Ok(Point3::new((u - k.cu) * z / k.fu, (v - k.cv) * z / k.fv, z))
}

/// Points with unit normals and optional RGB colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl OrientedPointCloud {
    /// Builds a cloud, normalizing every normal. Fails on length mismatch or a
    /// zero normal.
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let normals = normals
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    Ok(n / len)
                } else {
                    Err(Error::InvalidParameter("zero or non-finite normal".into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            points,
            normals,
            colors: None,
        })
    }

    pub fn with_colors(mut self, colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::InvalidParameter("color count does not match points".into()));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = self.points.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo, hi))
    }

    /// Keeps the points for which `keep(index)` is true.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: idx.iter().map(|&i| self.normals[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Appends another cloud. Colors survive only if both clouds carry them.
    pub fn extend(&mut self, other: &OrientedPointCloud) {
        let had_points = !self.points.is_empty();
        self.points.extend_from_slice(&other.points);
        self.normals.extend_from_slice(&other.normals);
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if !had_points => Some(b.clone()),
            _ => None,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(525.0, 520.0, 319.5, 239.5).unwrap()
    }

    #[test]
    fn principal_ray_backprojects_to_axis() {
        let k = k();
        let p = backproject_pixel(k.cu, k.cv, 1.0, &k).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn one_focal_length_off_axis() {
        let k = k();
        let p = backproject_pixel(k.cu + k.fu, k.cv, 2.0, &k).unwrap();
        assert!((p - Point3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
        let q = backproject_pixel(k.cu, k.cv - k.fv, 0.5, &k).unwrap();
        assert!((q - Point3::new(0.0, -0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_depth() {
        let k = k();
        for z in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                backproject_pixel(10.0, 10.0, z, &k),
                Err(Error::InvalidDepth(_))
            ));
        }
    }

    #[test]
    fn rejects_bad_focal_length() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn invalid_depths_masked_on_construction() {
        let d = DepthImage::from_depths(2, 2, vec![1.0, 0.0, -2.0, f64::NAN]).unwrap();
        assert_eq!(d.valid_mask(), &[true, false, false, false]);
        assert!(DepthImage::from_depths(2, 2, vec![1.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn backproject_then_project_is_identity(
            u in 0.0f64..640.0, v in 0.0f64..480.0, z in 0.05f64..20.0
        ) {
            let k = k();
            let p = k.backproject(u, v, z).unwrap();
            let (u2, v2, z2) = k.project(&p);
            proptest::prop_assert!(((u2 - u) / u.max(1.0)).abs() < 1e-9);
            proptest::prop_assert!(((v2 - v) / v.max(1.0)).abs() < 1e-9);
            proptest::prop_assert!(((z2 - z) / z).abs() < 1e-9);
        }
    }
}
