use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::rgbd::OrientedPointCloud;
use crate::volume::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Element rows: scalar properties by name, plus the first list property.
#[derive(Debug, Default)]
struct Table {
    columns: Vec<String>,
    scalars: Vec<Vec<f64>>,
    lists: Vec<Vec<usize>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

struct PlyData {
    tables: Vec<(String, Table)>,
}

impl PlyData {
    fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn read_ply(path: &Path) -> Result<PlyData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |r: &mut BufReader<File>, line: &mut String| -> Result<usize> {
        line.clear();
        let n = r.read_line(line).map_err(|e| Error::io(path, e))?;
        lineno += 1;
        if n == 0 {
            return Err(Error::parse(path, lineno, "unexpected end of header"));
        }
        Ok(lineno)
    };
    let ln = next_line(&mut r, &mut line)?;
    if line.trim() != "ply" {
        return Err(Error::parse(path, ln, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines;
    loop {
        let ln = next_line(&mut r, &mut line)?;
        header_lines = ln;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => {
                return Err(Error::parse(path, ln, format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(path, ln, format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?;
                let (Some(c), Some(i)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::parse(path, ln, "unknown list property type"));
                };
                el.props.push(Property::List(c, i));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?;
                let t = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(path, ln, format!("unknown property type '{ty}'")))?;
                el.props.push(Property::Scalar(name.to_string(), t));
            }
            _ => return Err(Error::parse(path, ln, format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, header_lines, "missing format line"))?;

    let mut tables = Vec::new();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            r.read_to_string(&mut body).map_err(|e| Error::io(path, e))?;
            let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for el in &elements {
                let mut t = table_for(el);
                for _ in 0..el.count {
                    let (k, l) = lines.next().ok_or_else(|| {
                        Error::parse(path, header_lines + 1, format!("missing rows of '{}'", el.name))
                    })?;
                    let ln = header_lines + 1 + k;
                    let mut tokens = l.split_whitespace();
                    let mut num = || -> Result<f64> {
                        let s = tokens
                            .next()
                            .ok_or_else(|| Error::parse(path, ln, "too few values"))?;
                        s.parse()
                            .map_err(|_| Error::parse(path, ln, format!("'{s}' is not a number")))
                    };
                    let mut row = Vec::new();
                    let mut list = None;
                    for p in &el.props {
                        match p {
                            Property::Scalar(..) => row.push(num()?),
                            Property::List(..) => {
                                let n = num()? as usize;
                                let items: Vec<usize> = (0..n)
                                    .map(|_| num().map(|v| v as usize))
                                    .collect::<Result<_>>()?;
                                list.get_or_insert(items);
                            }
                        }
                    }
                    t.scalars.push(row);
                    if let Some(l) = list {
                        t.lists.push(l);
                    }
                }
                tables.push((el.name.clone(), t));
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = [0u8; 8];
            let mut read = |r: &mut BufReader<File>, s: Scalar| -> Result<f64> {
                r.read_exact(&mut buf[..s.size()])
                    .map_err(|_| Error::parse(path, header_lines, "binary body truncated"))?;
                Ok(s.decode_le(&buf))
            };
            for el in &elements {
                let mut t = table_for(el);
                for _ in 0..el.count {
                    let mut row = Vec::new();
                    let mut list = None;
                    for p in &el.props {
                        match *p {
                            Property::Scalar(_, s) => row.push(read(&mut r, s)?),
                            Property::List(c, i) => {
                                let n = read(&mut r, c)? as usize;
                                let items: Vec<usize> = (0..n)
                                    .map(|_| read(&mut r, i).map(|v| v as usize))
                                    .collect::<Result<_>>()?;
                                list.get_or_insert(items);
                            }
                        }
                    }
                    t.scalars.push(row);
                    if let Some(l) = list {
                        t.lists.push(l);
                    }
                }
                tables.push((el.name.clone(), t));
            }
        }
    }
    Ok(PlyData { tables })
}

fn table_for(el: &Element) -> Table {
    Table {
        columns: el
            .props
            .iter()
            .filter_map(|p| match p {
                Property::Scalar(n, _) => Some(n.clone()),
                Property::List(..) => None,
            })
            .collect(),
        scalars: Vec::with_capacity(el.count),
        lists: Vec::new(),
    }
}

fn vertex_positions<'a>(path: &Path, data: &'a PlyData) -> Result<(Vec<Point3<f64>>, &'a Table)> {
    let t = data
        .table("vertex")
        .ok_or_else(|| Error::parse(path, 0, "no vertex element"))?;
    let (Some(x), Some(y), Some(z)) = (t.column("x"), t.column("y"), t.column("z")) else {
        return Err(Error::parse(path, 0, "vertex element lacks x, y, z"));
    };
    let pts = t.scalars.iter().map(|r| Point3::new(r[x], r[y], r[z])).collect();
    Ok((pts, t))
}

pub fn read_ply_cloud(path: &Path) -> Result<OrientedPointCloud> {
    let data = read_ply(path)?;
    let (points, t) = vertex_positions(path, &data)?;
    let (Some(nx), Some(ny), Some(nz)) = (t.column("nx"), t.column("ny"), t.column("nz")) else {
        return Err(Error::parse(path, 0, "vertex element lacks nx, ny, nz"));
    };
    let normals: Vec<Vector3<f64>> = t
        .scalars
        .iter()
        .map(|r| Vector3::new(r[nx], r[ny], r[nz]))
        .collect();
    if normals.iter().any(|n| !(n.norm() > 0.0)) {
        return Err(Error::parse(path, 0, "zero-length normal"));
    }
    let mut cloud = OrientedPointCloud::new(points, normals)?;
    if let (Some(r), Some(g), Some(b)) = (t.column("red"), t.column("green"), t.column("blue")) {
        let colors = t
            .scalars
            .iter()
            .map(|row| [row[r] as u8, row[g] as u8, row[b] as u8])
            .collect();
        cloud = cloud.with_colors(colors)?;
    }
    Ok(cloud)
}

/// Reads a mesh; polygons with more than three corners are fanned.
pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let data = read_ply(path)?;
    let (vertices, _) = vertex_positions(path, &data)?;
    let faces = data
        .table("face")
        .map(|t| fan(&t.lists))
        .unwrap_or_default();
    TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub(crate) fn fan(polys: &[Vec<usize>]) -> Vec<[usize; 3]> {
    polys
        .iter()
        .flat_map(|p| (1..p.len().saturating_sub(1)).map(move |k| [p[0], p[k], p[k + 1]]))
        .collect()
}

fn header(w: &mut impl Write, format: PlyFormat) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    match format {
        PlyFormat::Ascii => writeln!(w, "format ascii 1.0"),
        PlyFormat::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0"),
    }
}

pub fn write_ply_cloud(path: &Path, cloud: &OrientedPointCloud, format: PlyFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        header(w, format)?;
        writeln!(w, "element vertex {}", cloud.len())?;
        for p in ["x", "y", "z", "nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
        if cloud.colors.is_some() {
            for c in ["red", "green", "blue"] {
                writeln!(w, "property uchar {c}")?;
            }
        }
        writeln!(w, "end_header")?;
        for i in 0..cloud.len() {
            let (p, n) = (cloud.points[i], cloud.normals[i]);
            let vals = [p.x, p.y, p.z, n.x, n.y, n.z];
            match format {
                PlyFormat::Ascii => {
                    let mut s: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                    if let Some(c) = &cloud.colors {
                        s.extend(c[i].iter().map(|v| v.to_string()));
                    }
                    writeln!(w, "{}", s.join(" "))?;
                }
                PlyFormat::BinaryLittleEndian => {
                    for v in vals {
                        w.write_all(&v.to_le_bytes())?;
                    }
                    if let Some(c) = &cloud.colors {
                        w.write_all(&c[i])?;
                    }
                }
            }
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}

pub fn write_ply_mesh(path: &Path, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        header(w, format)?;
        writeln!(w, "element vertex {}", mesh.vertices.len())?;
        for p in ["x", "y", "z"] {
            writeln!(w, "property double {p}")?;
        }
        writeln!(w, "element face {}", mesh.faces.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        match format {
            PlyFormat::Ascii => {
                for p in &mesh.vertices {
                    writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
                }
                for f in &mesh.faces {
                    writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
                }
            }
            PlyFormat::BinaryLittleEndian => {
                for p in &mesh.vertices {
                    for v in [p.x, p.y, p.z] {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                for f in &mesh.faces {
                    w.write_all(&[3])?;
                    for &i in f {
                        w.write_all(&(i as i32).to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()
    };
    go(&mut w).map_err(|e| Error::io(path, e))
}
