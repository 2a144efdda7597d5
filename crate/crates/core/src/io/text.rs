use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point2, Point3, Vector3};

use crate::error::{Error, Result};
use crate::poisson::{ScalarField, VoxelGrid};
use crate::registration::RigidMotion;
use crate::rgbd::CameraIntrinsics;
use crate::volume::Plane;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn numbers(path: &Path, ln: usize, line: &str, sep: &[char]) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || sep.contains(&c))
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, ln, format!("'{s}' is not a number")))
        })
        .collect()
}

/// Intrinsics and image size of a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFile {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
}

/// `key value` lines with keys `fu fv cu cv width height`.
pub fn read_intrinsics(path: &Path) -> Result<CameraFile> {
    let text = read_text(path)?;
    let keys = ["fu", "fv", "cu", "cv", "width", "height"];
    let mut vals = [None; 6];
    for (ln, line) in content_lines(&text) {
        let mut w = line.split_whitespace();
        let (Some(key), Some(value), None) = (w.next(), w.next(), w.next()) else {
            return Err(Error::parse(path, ln, "expected 'key value'"));
        };
        let slot = keys
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| Error::parse(path, ln, format!("unknown key '{key}'")))?;
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(path, ln, format!("'{value}' is not a number")))?;
        vals[slot] = Some(v);
    }
    let mut out = [0.0; 6];
    for (k, v) in vals.iter().enumerate() {
        out[k] = v.ok_or_else(|| Error::parse(path, 0, format!("missing key '{}'", keys[k])))?;
    }
    if out[4] < 1.0 || out[5] < 1.0 || out[4].fract() != 0.0 || out[5].fract() != 0.0 {
        return Err(Error::parse(path, 0, "width and height must be positive integers"));
    }
    Ok(CameraFile {
        intrinsics: CameraIntrinsics::new(out[0], out[1], out[2], out[3])
            .map_err(|e| Error::parse(path, 0, e.to_string()))?,
        width: out[4] as usize,
        height: out[5] as usize,
    })
}

pub fn write_intrinsics(path: &Path, cam: &CameraFile) -> Result<()> {
    let k = &cam.intrinsics;
    write_text(
        path,
        &format!(
            "fu {:?}\nfv {:?}\ncu {:?}\ncv {:?}\nwidth {}\nheight {}\n",
            k.fu, k.fv, k.cu, k.cv, cam.width, cam.height
        ),
    )
}

/// Three rows `r00 r01 r02 t0`, ... of the camera-to-world motion.
pub fn write_pose(path: &Path, g: &RigidMotion) -> Result<()> {
    let text: String = g
        .to_rows()
        .iter()
        .map(|r| format!("{:?} {:?} {:?} {:?}\n", r[0], r[1], r[2], r[3]))
        .collect();
    write_text(path, &text)
}

/// Reads a 3x4 pose. Rotations off by at most 1e-6 from orthonormal (e.g.
/// rounded by hand) are re-orthonormalized.
pub fn read_pose(path: &Path) -> Result<RigidMotion> {
    let text = read_text(path)?;
    let rows: Vec<(usize, Vec<f64>)> = content_lines(&text)
        .map(|(ln, l)| numbers(path, ln, l, &[',']).map(|v| (ln, v)))
        .collect::<Result<_>>()?;
    if rows.len() != 3 {
        return Err(Error::parse(path, 0, format!("expected 3 rows, got {}", rows.len())));
    }
    let mut r = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for (i, (ln, row)) in rows.iter().enumerate() {
        if row.len() != 4 {
            return Err(Error::parse(path, *ln, format!("expected 4 values, got {}", row.len())));
        }
        for j in 0..3 {
            r[(i, j)] = row[j];
        }
        t[i] = row[3];
    }
    let err = (r.transpose() * r - Matrix3::identity()).norm();
    if err > 1e-6 || r.determinant() <= 0.0 {
        return Err(Error::parse(path, 0, "rotation block is not a proper rotation"));
    }
    let g = RigidMotion {
        rotation: r,
        translation: t,
    };
    // exact round trip for poses we wrote ourselves
    Ok(if err < 1e-9 { g } else { g.orthonormalized() })
}

/// Pixel matches `u0,v0,u1,v1`, one per line; a leading header line is
/// skipped.
pub fn read_correspondences(path: &Path) -> Result<Vec<(Point2<f64>, Point2<f64>)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (k, (ln, line)) in content_lines(&text).enumerate() {
        if k == 0 && line.chars().any(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let v = numbers(path, ln, line, &[','])?;
        if v.len() != 4 {
            return Err(Error::parse(path, ln, format!("expected 4 values, got {}", v.len())));
        }
        out.push((Point2::new(v[0], v[1]), Point2::new(v[2], v[3])));
    }
    Ok(out)
}

pub fn write_correspondences(path: &Path, matches: &[(Point2<f64>, Point2<f64>)]) -> Result<()> {
    let mut text = String::from("u0,v0,u1,v1\n");
    for (a, b) in matches {
        text.push_str(&format!("{:?},{:?},{:?},{:?}\n", a.x, a.y, b.x, b.y));
    }
    write_text(path, &text)
}

/// One line `nx ny nz d`.
pub fn read_plane(path: &Path) -> Result<Plane> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let (ln, line) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty plane file"))?;
    let v = numbers(path, ln, line, &[','])?;
    if v.len() != 4 {
        return Err(Error::parse(path, ln, format!("expected 'nx ny nz d', got {} values", v.len())));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(path, ln, "trailing content"));
    }
    Plane::new(Vector3::new(v[0], v[1], v[2]), v[3]).map_err(|e| Error::parse(path, ln, e.to_string()))
}

pub fn write_plane(path: &Path, plane: &Plane) -> Result<()> {
    let n = plane.normal;
    write_text(path, &format!("{:?} {:?} {:?} {:?}\n", n.x, n.y, n.z, plane.offset))
}

/// Text header (`dims`, `origin`, `spacing`, terminated by `end`) followed by
/// the node values as little-endian float32, x fastest.
pub fn write_scalar_field(path: &Path, field: &ScalarField) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let g = &field.grid;
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "scalar-field")?;
        writeln!(w, "dims {} {} {}", g.dims[0], g.dims[1], g.dims[2])?;
        writeln!(w, "origin {:?} {:?} {:?}", g.origin.x, g.origin.y, g.origin.z)?;
        writeln!(w, "spacing {:?}", g.spacing)?;
        writeln!(w, "end")?;
        for v in &field.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_scalar_field(path: &Path) -> Result<ScalarField> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut dims = None;
    let mut origin = None;
    let mut spacing = None;
    let mut ln = 0;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(Error::parse(path, ln, "header not terminated by 'end'"));
        }
        ln += 1;
        let line = line.trim();
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "scalar-field" if ln == 1 => {}
            "dims" => {
                let v = numbers(path, ln, rest, &[])?;
                if v.len() != 3 || v.iter().any(|d| d.fract() != 0.0 || *d < 2.0) {
                    return Err(Error::parse(path, ln, "bad dims"));
                }
                dims = Some([v[0] as usize, v[1] as usize, v[2] as usize]);
            }
            "origin" => {
                let v = numbers(path, ln, rest, &[])?;
                if v.len() != 3 {
                    return Err(Error::parse(path, ln, "bad origin"));
                }
                origin = Some(Point3::new(v[0], v[1], v[2]));
            }
            "spacing" => {
                let v = numbers(path, ln, rest, &[])?;
                spacing = v.first().copied();
            }
            "end" => break,
            _ => return Err(Error::parse(path, ln, format!("unexpected header line '{line}'"))),
        }
    }
    let (Some(dims), Some(origin), Some(spacing)) = (dims, origin, spacing) else {
        return Err(Error::parse(path, ln, "header lacks dims, origin or spacing"));
    };
    let grid = VoxelGrid::new(origin, spacing, dims).map_err(|e| Error::parse(path, ln, e.to_string()))?;
    let mut raw = vec![0u8; grid.node_count() * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::parse(path, ln, "field data truncated"))?;
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ScalarField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.txt");
        let cam = CameraFile {
            intrinsics: CameraIntrinsics::new(525.0, 524.5, 319.5, 239.5).unwrap(),
            width: 640,
            height: 480,
        };
        write_intrinsics(&p, &cam).unwrap();
        assert_eq!(read_intrinsics(&p).unwrap(), cam);
        std::fs::write(&p, "fu 1\nfv 1\ncu 0\ncv 0\nwidth 4\n").unwrap();
        assert!(read_intrinsics(&p).is_err());
        std::fs::write(&p, "fu 1\nfv x\n").unwrap();
        assert!(matches!(read_intrinsics(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn pose_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pose.txt");
        let g = RigidMotion::from_axis_angle(
            &Vector3::new(1.0, 2.0, 3.0).normalize(),
            0.7,
            Vector3::new(0.1, -0.2, 0.3),
        );
        write_pose(&p, &g).unwrap();
        let back = read_pose(&p).unwrap();
        assert!((back.rotation - g.rotation).norm() < 1e-15);
        assert_eq!(back.translation, g.translation);
        std::fs::write(&p, "1 0 0 0\n0 1 0 0\n0 0 -1 0\n").unwrap();
        assert!(read_pose(&p).is_err());
        std::fs::write(&p, "1 0 0 0\n0 1 0\n0 0 1 0\n").unwrap();
        assert!(matches!(read_pose(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn correspondences_and_plane() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let m = vec![
            (Point2::new(1.5, 2.0), Point2::new(3.0, 4.25)),
            (Point2::new(10.0, 20.0), Point2::new(30.0, 40.0)),
        ];
        write_correspondences(&p, &m).unwrap();
        assert_eq!(read_correspondences(&p).unwrap(), m);
        std::fs::write(&p, "1,2,3,4\n5,6,7\n").unwrap();
        assert!(matches!(read_correspondences(&p), Err(Error::Parse { line: 2, .. })));

        let q = dir.path().join("plane.txt");
        let plane = Plane::new(Vector3::new(0.0, 0.0, 1.0), 0.25).unwrap();
        write_plane(&q, &plane).unwrap();
        assert_eq!(read_plane(&q).unwrap(), plane);
    }

    #[test]
    fn scalar_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("phi.field");
        let g = VoxelGrid::new(Point3::new(-0.5, 0.0, 0.25), 0.125, [3, 4, 5]).unwrap();
        let f = ScalarField::from_fn(g, |q| q.x + 2.0 * q.y - q.z);
        write_scalar_field(&p, &f).unwrap();
        let back = read_scalar_field(&p).unwrap();
        assert_eq!(back.grid, g);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
