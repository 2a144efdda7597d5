//! Difference-of-Gaussians keypoints with gradient-orientation histogram
//! descriptors (4x4 spatial cells, 8 orientation bins).

use std::f32::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::rgbd::GrayImage;

pub const DESCRIPTOR_LEN: usize = 128;

const DESC_CELLS: usize = 4;
const DESC_BINS: usize = 8;
const ORI_BINS: usize = 36;
const BORDER: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct DetectorParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Minimum |DoG| response for intensities in `[0, 1]`, divided by
    /// `scales_per_octave` before use.
    pub contrast_threshold: f32,
    /// Principal curvature ratio above which edge-like extrema are dropped.
    pub edge_threshold: f32,
    /// Blur of the first scale of each octave.
    pub sigma: f32,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_threshold: 10.0,
            sigma: 1.6,
        }
    }
}

/// Sub-pixel keypoint in input image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    /// Blur scale in input pixels.
    pub scale: f64,
    /// Dominant gradient orientation, radians.
    pub orientation: f64,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    /// Unit-length descriptor of `DESCRIPTOR_LEN` entries.
    pub descriptor: Vec<f32>,
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn downsample(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane { w, h, data }
    }

    fn blur(&self, sigma: f32) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil().max(1.0) as isize;
        let mut k: Vec<f32> = (-r..=r)
            .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f32 = k.iter().sum();
        k.iter_mut().for_each(|x| *x /= s);
        let (w, h) = (self.w as isize, self.h as isize);
        let clamp = |i: isize, n: isize| i.clamp(0, n - 1) as usize;

        let tmp: Vec<f32> = (0..self.h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let k = &k;
                (0..self.w).map(move |x| {
                    let mut acc = 0.0;
                    for (j, kv) in k.iter().enumerate() {
                        acc += kv * self.data[y * self.w + clamp(x as isize + j as isize - r, w)];
                    }
                    acc
                })
            })
            .collect();
        let data: Vec<f32> = (0..self.h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let (k, tmp) = (&k, &tmp);
                (0..self.w).map(move |x| {
                    let mut acc = 0.0;
                    for (j, kv) in k.iter().enumerate() {
                        acc += kv * tmp[clamp(y as isize + j as isize - r, h) * self.w + x];
                    }
                    acc
                })
            })
            .collect();
        Plane {
            w: self.w,
            h: self.h,
            data,
        }
    }
}

struct Octave {
    index: usize,
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

/// Detects DoG extrema and describes each with an orientation-normalized
/// gradient histogram. Output order is deterministic for a given image.
pub fn detect_and_describe(image: &GrayImage, params: &DetectorParams) -> Vec<Feature> {
    let s = params.scales_per_octave.max(1);
    let min_size = 2 * BORDER + 3;
    if image.width < min_size || image.height < min_size {
        return Vec::new();
    }
    let input = Plane {
        w: image.width,
        h: image.height,
        data: image.data.clone(),
    };
    // assume the input carries a blur of 0.5 pixels
    let base = input.blur((params.sigma * params.sigma - 0.25).max(0.01).sqrt());
    let k = 2f32.powf(1.0 / s as f32);

    let mut octaves = Vec::new();
    let mut first = base;
    for o in 0..params.octaves {
        if first.w < min_size || first.h < min_size {
            break;
        }
        let mut gauss = vec![first];
        for i in 1..s + 3 {
            let prev = params.sigma * k.powi(i as i32 - 1);
            let cur = prev * k;
            let inc = (cur * cur - prev * prev).sqrt();
            let next = gauss[i - 1].blur(inc);
            gauss.push(next);
        }
        let dog = gauss
            .windows(2)
            .map(|p| Plane {
                w: p[0].w,
                h: p[0].h,
                data: p[1].data.iter().zip(&p[0].data).map(|(a, b)| a - b).collect(),
            })
            .collect();
        first = gauss[s].downsample();
        octaves.push(Octave {
            index: o,
            gauss,
            dog,
        });
    }

    octaves
        .iter()
        .flat_map(|oct| {
            (1..=s)
                .into_par_iter()
                .flat_map_iter(|layer| detect_layer(oct, layer, s, params))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn detect_layer(oct: &Octave, layer: usize, s: usize, params: &DetectorParams) -> Vec<Feature> {
    let dog = &oct.dog;
    let (w, h) = (dog[layer].w, dog[layer].h);
    let threshold = params.contrast_threshold / s as f32;
    let prefilter = 0.5 * threshold;
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let val = dog[layer].at(x, y);
            if val.abs() <= prefilter || !is_extremum(dog, layer, x, y, val) {
                continue;
            }
            let Some((xi, yi, li, offset, contrast)) = refine(dog, layer, x, y, s) else {
                continue;
            };
            if contrast.abs() < threshold || is_edge(&dog[li], xi, yi, params.edge_threshold) {
                continue;
            }
            let scale_oct = params.sigma * 2f32.powf((li as f32 + offset[2]) / s as f32);
            let factor = (1usize << oct.index) as f32;
            let gauss = &oct.gauss[li];
            for orientation in orientations(gauss, xi, yi, scale_oct) {
                let descriptor = describe(
                    gauss,
                    xi as f32 + offset[0],
                    yi as f32 + offset[1],
                    orientation,
                    scale_oct,
                );
                out.push(Feature {
                    keypoint: Keypoint {
                        u: ((xi as f32 + offset[0]) * factor) as f64,
                        v: ((yi as f32 + offset[1]) * factor) as f64,
                        scale: (scale_oct * factor) as f64,
                        orientation: orientation as f64,
                        response: contrast.abs() as f64,
                    },
                    descriptor,
                });
            }
        }
    }
    out
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize, val: f32) -> bool {
    let is_max = val > 0.0;
    for l in layer - 1..=layer + 1 {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if l == layer && xx == x && yy == y {
                    continue;
                }
                let n = dog[l].at(xx, yy);
                if (is_max && n >= val) || (!is_max && n <= val) {
                    return false;
                }
            }
        }
    }
    true
}

/// Quadratic sub-pixel/sub-scale refinement. Returns the final integer
/// location, fractional offset `(dx, dy, dscale)` and interpolated response.
fn refine(
    dog: &[Plane],
    layer: usize,
    x: usize,
    y: usize,
    s: usize,
) -> Option<(usize, usize, usize, [f32; 3], f32)> {
    let (w, h) = (dog[0].w, dog[0].h);
    let (mut x, mut y, mut l) = (x, y, layer);
    for _ in 0..5 {
        let d = |dl: isize, dy: isize, dx: isize| -> f64 {
            dog[(l as isize + dl) as usize].at((x as isize + dx) as usize, (y as isize + dy) as usize)
                as f64
        };
        let c = d(0, 0, 0);
        let g = Vector3::new(
            0.5 * (d(0, 0, 1) - d(0, 0, -1)),
            0.5 * (d(0, 1, 0) - d(0, -1, 0)),
            0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
        );
        let dxx = d(0, 0, 1) + d(0, 0, -1) - 2.0 * c;
        let dyy = d(0, 1, 0) + d(0, -1, 0) - 2.0 * c;
        let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * c;
        let dxy = 0.25 * (d(0, 1, 1) - d(0, 1, -1) - d(0, -1, 1) + d(0, -1, -1));
        let dxs = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
        let dys = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
        let hess = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let offset = -(hess.try_inverse()? * g);
        if offset.iter().all(|o| o.abs() < 0.5) {
            let contrast = c + 0.5 * g.dot(&offset);
            return Some((
                x,
                y,
                l,
                [offset[0] as f32, offset[1] as f32, offset[2] as f32],
                contrast as f32,
            ));
        }
        if offset.iter().any(|o| o.abs() > 1e3) {
            return None;
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let nl = l as isize + offset[2].round() as isize;
        if nl < 1
            || nl > s as isize
            || nx < BORDER as isize
            || ny < BORDER as isize
            || nx >= (w - BORDER) as isize
            || ny >= (h - BORDER) as isize
        {
            return None;
        }
        (x, y, l) = (nx as usize, ny as usize, nl as usize);
    }
    None
}

fn is_edge(dog: &Plane, x: usize, y: usize, r: f32) -> bool {
    let c = dog.at(x, y);
    let dxx = dog.at(x + 1, y) + dog.at(x - 1, y) - 2.0 * c;
    let dyy = dog.at(x, y + 1) + dog.at(x, y - 1) - 2.0 * c;
    let dxy = 0.25 * (dog.at(x + 1, y + 1) - dog.at(x - 1, y + 1) - dog.at(x + 1, y - 1)
        + dog.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det
}

#[inline]
fn gradient(p: &Plane, x: usize, y: usize) -> (f32, f32) {
    (
        p.at(x + 1, y) - p.at(x - 1, y),
        p.at(x, y + 1) - p.at(x, y - 1),
    )
}

fn orientations(gauss: &Plane, x: usize, y: usize, scale: f32) -> Vec<f32> {
    let sigma = 1.5 * scale;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= gauss.h as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= gauss.w as isize - 1 {
                continue;
            }
            let (gx, gy) = gradient(gauss, xx as usize, yy as usize);
            let weight = (-((dx * dx + dy * dy) as f32) / (2.0 * sigma * sigma)).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle / (2.0 * PI) * ORI_BINS as f32).round() as usize) % ORI_BINS;
            hist[bin] += weight * (gx * gx + gy * gy).sqrt();
        }
    }
    let mut smooth = [0f32; ORI_BINS];
    for i in 0..ORI_BINS {
        let at = |k: isize| hist[(i as isize + k).rem_euclid(ORI_BINS as isize) as usize];
        smooth[i] = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    let max = smooth.iter().cloned().fold(0.0, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let r = smooth[(i + 1) % ORI_BINS];
        let c = smooth[i];
        if c > l && c > r && c >= 0.8 * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (i as f32 + shift).rem_euclid(ORI_BINS as f32);
            out.push(bin * 2.0 * PI / ORI_BINS as f32);
        }
    }
    out
}

fn describe(gauss: &Plane, x: f32, y: f32, orientation: f32, scale: f32) -> Vec<f32> {
    let d = DESC_CELLS as f32;
    let cell_width = 3.0 * scale;
    let radius = (cell_width * std::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let (sin_t, cos_t) = orientation.sin_cos();
    let n = DESC_BINS as f32;
    let bins_per_rad = n / (2.0 * PI);
    let exp_scale = -1.0 / (0.5 * d * d);
    // histogram with one cell of padding per spatial axis for interpolation
    const P: usize = DESC_CELLS + 2;
    let mut hist = vec![0f32; P * P * DESC_BINS];
    let (xc, yc) = (x.round() as isize, y.round() as isize);

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (xx, yy) = (xc + dx, yc + dy);
            if xx <= 0 || yy <= 0 || xx >= gauss.w as isize - 1 || yy >= gauss.h as isize - 1 {
                continue;
            }
            let ox = xx as f32 - x;
            let oy = yy as f32 - y;
            // rotate into the keypoint frame, in cell units
            let rx = (cos_t * ox + sin_t * oy) / cell_width;
            let ry = (-sin_t * ox + cos_t * oy) / cell_width;
            let cbin = rx + d / 2.0 - 0.5;
            let rbin = ry + d / 2.0 - 0.5;
            if cbin <= -1.0 || rbin <= -1.0 || cbin >= d || rbin >= d {
                continue;
            }
            let (gx, gy) = gradient(gauss, xx as usize, yy as usize);
            let mag = (gx * gx + gy * gy).sqrt() * ((rx * rx + ry * ry) * exp_scale).exp();
            let angle = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI);
            let obin = angle * bins_per_rad;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (ir, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (ic, wc) in [(0, 1.0 - fc), (1, fc)] {
                    for (io, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let r = (r0 as isize + ir + 1) as usize;
                        let c = (c0 as isize + ic + 1) as usize;
                        let o = (o0 as usize + io) % DESC_BINS;
                        hist[(r * P + c) * DESC_BINS + o] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut desc = Vec::with_capacity(DESCRIPTOR_LEN);
    for r in 0..DESC_CELLS {
        for c in 0..DESC_CELLS {
            let base = ((r + 1) * P + (c + 1)) * DESC_BINS;
            desc.extend_from_slice(&hist[base..base + DESC_BINS]);
        }
    }
    normalize(&mut desc);
    desc.iter_mut().for_each(|v| *v = v.min(0.2));
    normalize(&mut desc);
    desc
}

fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
