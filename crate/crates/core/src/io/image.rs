use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rgbd::{DepthImage, GrayImage};

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    sixteen: bool,
    bytes: Vec<u8>,
}

fn decode_png(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(|e| png_err(path, e))?;
    bytes.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(png_err(path, "unexpanded palette image")),
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        sixteen: info.bit_depth == png::BitDepth::Sixteen,
        bytes,
    })
}

fn encode_png(
    path: &Path,
    width: usize,
    height: usize,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(data).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// 16-bit grayscale PNG holding depth in millimeters; 0 marks invalid pixels.
/// Depths are rounded to whole millimeters and clamped to 65.535 m.
pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<()> {
    let mut bytes = Vec::with_capacity(depth.data().len() * 2);
    for (&z, &ok) in depth.data().iter().zip(depth.valid_mask()) {
        let mm = if ok { (z * 1000.0).round().clamp(1.0, 65535.0) as u16 } else { 0 };
        bytes.extend(mm.to_be_bytes());
    }
    encode_png(path, depth.width(), depth.height(), png::BitDepth::Sixteen, &bytes)
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let img = decode_png(path)?;
    if img.channels != 1 || !img.sixteen {
        return Err(png_err(path, "depth PNG must be 16-bit single channel"));
    }
    let data = img
        .bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
        .collect();
    DepthImage::from_depths(img.width, img.height, data)
}

/// Single-channel PFM (`Pf`), little-endian, meters; invalid pixels are 0.
pub fn write_depth_pfm(path: &Path, depth: &DepthImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "Pf\n{} {}\n-1.0\n", depth.width(), depth.height()).map_err(io)?;
    // PFM rows run bottom to top
    for v in (0..depth.height()).rev() {
        for u in 0..depth.width() {
            let z = depth.get(u, v).unwrap_or(0.0) as f32;
            w.write_all(&z.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    // three whitespace-separated header lines
    for lineno in 1..=3 {
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            return Err(Error::parse(path, lineno, "truncated PFM header"));
        }
        header.push(line.trim().to_string());
    }
    if header[0] != "Pf" {
        return Err(Error::parse(path, 1, format!("expected 'Pf', got '{}'", header[0])));
    }
    let dims: Vec<usize> = header[1]
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, 2, "bad PFM dimensions"))?;
    if dims.len() != 2 {
        return Err(Error::parse(path, 2, "bad PFM dimensions"));
    }
    let scale: f64 = header[2]
        .parse()
        .map_err(|_| Error::parse(path, 3, "bad PFM scale"))?;
    let (w, h) = (dims[0], dims[1]);
    let mut raw = vec![0u8; w * h * 4];
    r.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let mut data = vec![0.0; w * h];
    for (k, b) in raw.chunks_exact(4).enumerate() {
        let b = [b[0], b[1], b[2], b[3]];
        let z = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (u, v_up) = (k % w, k / w);
        data[(h - 1 - v_up) * w + u] = z as f64;
    }
    DepthImage::from_depths(w, h, data)
}

/// Loads a depth map by extension: `.png` (16-bit mm) or `.pfm` (meters).
pub fn read_depth(path: &Path) -> Result<DepthImage> {
    match extension(path).as_str() {
        "png" => read_depth_png(path),
        "pfm" => read_depth_pfm(path),
        other => Err(Error::parse(path, 0, format!("unsupported depth format '{other}'"))),
    }
}

pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<()> {
    match extension(path).as_str() {
        "png" => write_depth_png(path, depth),
        "pfm" => write_depth_pfm(path, depth),
        other => Err(Error::parse(path, 0, format!("unsupported depth format '{other}'"))),
    }
}

pub(crate) fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// 8-bit grayscale PNG with intensities in `[0, 1]`.
pub fn write_gray_png(path: &Path, image: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_png(path, image.width, image.height, png::BitDepth::Eight, &bytes)
}

/// Reads any PNG as intensities in `[0, 1]`; color is converted with Rec. 601
/// luma weights and alpha is ignored.
pub fn read_gray_png(path: &Path) -> Result<GrayImage> {
    let img = decode_png(path)?;
    let sample = |i: usize| -> f32 {
        if img.sixteen {
            u16::from_be_bytes([img.bytes[2 * i], img.bytes[2 * i + 1]]) as f32 / 65535.0
        } else {
            img.bytes[i] as f32 / 255.0
        }
    };
    let c = img.channels;
    let data = (0..img.width * img.height)
        .map(|p| {
            if c >= 3 {
                0.299 * sample(p * c) + 0.587 * sample(p * c + 1) + 0.114 * sample(p * c + 2)
            } else {
                sample(p * c)
            }
        })
        .collect();
    GrayImage::new(img.width, img.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_depth() -> DepthImage {
        let data = (0..35)
            .map(|i| if i % 7 == 3 { 0.0 } else { 0.5 + i as f64 * 0.0137 })
            .collect();
        DepthImage::from_depths(7, 5, data).unwrap()
    }

    #[test]
    fn png_depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let d = sample_depth();
        write_depth_png(&p, &d).unwrap();
        let back = read_depth(&p).unwrap();
        assert_eq!(back.valid_mask(), d.valid_mask());
        for (a, b) in back.data().iter().zip(d.data()) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
        }
    }

    #[test]
    fn pfm_depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let d = sample_depth();
        write_depth(&p, &d).unwrap();
        let back = read_depth(&p).unwrap();
        assert_eq!(back.valid_mask(), d.valid_mask());
        for (a, b) in back.data().iter().zip(d.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gray_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let g = GrayImage::new(3, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        write_gray_png(&p, &g).unwrap();
        let back = read_gray_png(&p).unwrap();
        for (a, b) in back.data.iter().zip(&g.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn bad_pfm_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, "PF\n2 2\n-1\n").unwrap();
        assert!(matches!(read_depth_pfm(&p), Err(Error::Parse { line: 1, .. })));
    }
}
