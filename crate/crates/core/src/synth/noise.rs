use nalgebra::{Point2, Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::registration::Correspondence;
use crate::rgbd::DepthImage;

fn check(sigma: f64, fraction: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma {sigma}")));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("outlier fraction {fraction}")));
    }
    Ok(())
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` (meters) to
/// every valid pixel, and with `outlier_fraction > 0` replaces that share of
/// valid pixels by depths drawn uniformly between the image's extremes.
///
/// Every pixel draws from its own stream keyed by its index, so the result
/// does not depend on evaluation order.
pub fn corrupt_depth(
    depth: &DepthImage,
    sigma: f64,
    outlier_fraction: f64,
    seed: u64,
) -> Result<DepthImage> {
    check(sigma, outlier_fraction)?;
    if sigma == 0.0 && outlier_fraction == 0.0 {
        return Ok(depth.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    let (lo, hi) = depth
        .data()
        .iter()
        .zip(depth.valid_mask())
        .filter(|(_, v)| **v)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), (z, _)| (lo.min(*z), hi.max(*z)));
    let data: Vec<f64> = depth
        .data()
        .par_iter()
        .zip(depth.valid_mask())
        .enumerate()
        .map(|(i, (&z, &valid))| {
            if !valid {
                return 0.0;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            if outlier_fraction > 0.0 && rng.random::<f64>() < outlier_fraction && hi > lo {
                return rng.random_range(lo..hi);
            }
            // negative noisy depths become invalid
            z + normal.sample(&mut rng)
        })
        .collect();
    DepthImage::from_depths(depth.width(), depth.height(), data)
}

/// Perturbs both 3D ends of every correspondence with Gaussian noise of
/// standard deviation `sigma`, then replaces exactly
/// `round(outlier_fraction * n)` seeded-chosen correspondences by random
/// ones: the second pixel is drawn uniformly over the `width x height` image
/// and the second point uniformly over the bounding box of all second points.
pub fn corrupt_correspondences(
    corrs: &[Correspondence],
    sigma: f64,
    outlier_fraction: f64,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<Vec<Correspondence>> {
    check(sigma, outlier_fraction)?;
    let mut out = corrs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma checked");
        let jitter = |rng: &mut ChaCha8Rng| {
            Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
        };
        for c in &mut out {
            c.x0 += jitter(&mut rng);
            c.x1 += jitter(&mut rng);
        }
    }
    let count = (outlier_fraction * corrs.len() as f64).round() as usize;
    if count == 0 {
        return Ok(out);
    }
    let (lo, hi) = corrs.iter().fold(
        (Point3::from([f64::INFINITY; 3]), Point3::from([f64::NEG_INFINITY; 3])),
        |(lo, hi), c| (lo.inf(&c.x1), hi.sup(&c.x1)),
    );
    let mut chosen = sample(&mut rng, corrs.len(), count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let c = &mut out[i];
        c.p1 = Point2::new(
            rng.random_range(0.0..width as f64),
            rng.random_range(0.0..height as f64),
        );
        c.x1 = Point3::from(Vector3::from_fn(|a, _| {
            if hi[a] > lo[a] {
                rng.random_range(lo[a]..hi[a])
            } else {
                lo[a]
            }
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let d = DepthImage::from_depths(4, 3, (0..12).map(|i| 1.0 + i as f64).collect()).unwrap();
        assert_eq!(corrupt_depth(&d, 0.0, 0.0, 7).unwrap(), d);
        let c = vec![
            Correspondence {
                i: 0,
                j: 0,
                p0: Point2::new(1.0, 2.0),
                p1: Point2::new(3.0, 4.0),
                x0: Point3::new(0.1, 0.2, 0.3),
                x1: Point3::new(0.4, 0.5, 0.6),
            };
            5
        ];
        assert_eq!(corrupt_correspondences(&c, 0.0, 0.0, 1, 10, 10).unwrap(), c);
    }

    #[test]
    fn depth_noise_statistics() {
        let (w, h) = (160, 100);
        let d = DepthImage::from_depths(w, h, vec![1.0; w * h]).unwrap();
        let n = corrupt_depth(&d, 0.002, 0.0, 42).unwrap();
        let vals = n.data();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((var.sqrt() - 0.002).abs() / 0.002 < 0.05);
        assert_eq!(n, corrupt_depth(&d, 0.002, 0.0, 42).unwrap());
        assert_ne!(n, corrupt_depth(&d, 0.002, 0.0, 43).unwrap());
    }

    #[test]
    fn exact_outlier_count() {
        let c: Vec<_> = (0..100)
            .map(|k| {
                let x = Point3::new(k as f64 * 0.01, 0.0, 1.0);
                Correspondence {
                    i: k,
                    j: k,
                    p0: Point2::new(k as f64, 0.0),
                    p1: Point2::new(k as f64, 0.0),
                    x0: x,
                    x1: x,
                }
            })
            .collect();
        let out = corrupt_correspondences(&c, 0.0, 0.5, 3, 640, 480).unwrap();
        let changed = out.iter().zip(&c).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 50);
    }

    #[test]
    fn bad_parameters() {
        let d = DepthImage::empty(2, 2);
        assert!(corrupt_depth(&d, -1.0, 0.0, 0).is_err());
        assert!(corrupt_depth(&d, 0.0, 1.0, 0).is_err());
    }
}
