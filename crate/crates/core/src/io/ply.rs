//! PLY 1.0 mesh and point-cloud I/O (ascii and binary_little_endian).
//!
//! Meshes are written with `float x/y/z`, a per-vertex `quality` scalar
//! holding the posterior variance, and `uchar`-counted `uint` face index
//! lists. The reader accepts the common scalar type spellings and skips
//! unknown vertex properties.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyMode {
    Ascii,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
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

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([
                bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
            ]),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<ElementDecl>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<String> {
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        if *pos >= bytes.len() {
            return Err(err("truncated header"));
        }
        let line = String::from_utf8_lossy(&bytes[start..*pos]).trim().to_string();
        *pos += 1;
        Ok(line)
    };

    if next_line(&mut pos)? != "ply" {
        return Err(err("missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    loop {
        let line = next_line(&mut pos)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => match tok.next() {
                Some("ascii") => binary = Some(false),
                Some("binary_little_endian") => binary = Some(true),
                other => {
                    return Err(err(&format!("unsupported format {other:?}")));
                }
            },
            Some("element") => {
                let name = tok.next().ok_or_else(|| err("element missing name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err("element missing count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let decl = elements.last_mut().ok_or_else(|| err("property before element"))?;
                let first = tok.next().ok_or_else(|| err("property missing type"))?;
                if first == "list" {
                    let count = tok
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| err("bad list count type"))?;
                    let item = tok
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| err("bad list item type"))?;
                    let name = tok.next().ok_or_else(|| err("list missing name"))?;
                    decl.properties.push(Property::List {
                        name: name.to_string(),
                        count,
                        item,
                    });
                } else {
                    let ty = Scalar::parse(first).ok_or_else(|| err("bad scalar type"))?;
                    let name = tok.next().ok_or_else(|| err("property missing name"))?;
                    decl.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(err(&format!("unknown header keyword {other:?}"))),
        }
    }
    Ok(Header {
        binary: binary.ok_or_else(|| err("missing format line"))?,
        elements,
        data_offset: pos,
    })
}

struct PlyContents {
    vertices: Vec<Point3>,
    qualities: Vec<f64>,
    faces: Vec<[u32; 3]>,
}

fn read_ply(path: &Path) -> Result<PlyContents> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, path)?;
    let err = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

    let mut vertices = Vec::new();
    let mut qualities = Vec::new();
    let mut faces = Vec::new();

    if header.binary {
        let mut pos = header.data_offset;
        for elem in &header.elements {
            for _ in 0..elem.count {
                let mut x = f64::NAN;
                let mut y = f64::NAN;
                let mut z = f64::NAN;
                let mut q = 0.0;
                let mut indices: Vec<u32> = Vec::new();
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { name, ty } => {
                            if pos + ty.size() > bytes.len() {
                                return Err(err("truncated binary data".into()));
                            }
                            let v = ty.read_le(&bytes[pos..]);
                            pos += ty.size();
                            match name.as_str() {
                                "x" => x = v,
                                "y" => y = v,
                                "z" => z = v,
                                "quality" => q = v,
                                _ => {}
                            }
                        }
                        Property::List { name, count, item } => {
                            if pos + count.size() > bytes.len() {
                                return Err(err("truncated binary list".into()));
                            }
                            let n = count.read_le(&bytes[pos..]) as usize;
                            pos += count.size();
                            if pos + n * item.size() > bytes.len() {
                                return Err(err("truncated binary list items".into()));
                            }
                            let is_face_list = name == "vertex_indices" || name == "vertex_index";
                            for _ in 0..n {
                                if is_face_list {
                                    indices.push(item.read_le(&bytes[pos..]) as u32);
                                }
                                pos += item.size();
                            }
                        }
                    }
                }
                if elem.name == "vertex" {
                    vertices.push(Point3::new(x, y, z));
                    qualities.push(q);
                } else if elem.name == "face" {
                    if indices.len() != 3 {
                        return Err(err(format!(
                            "only triangular faces supported, got {}",
                            indices.len()
                        )));
                    }
                    faces.push([indices[0], indices[1], indices[2]]);
                }
            }
        }
    } else {
        let text = String::from_utf8_lossy(&bytes[header.data_offset..]);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        for elem in &header.elements {
            for _ in 0..elem.count {
                let line = lines
                    .next()
                    .ok_or_else(|| err("truncated ascii data".into()))?;
                let mut tok = line.split_whitespace();
                let next_f64 = |tok: &mut std::str::SplitWhitespace| -> Result<f64> {
                    tok.next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| err("bad ascii value".into()))
                };
                let mut x = f64::NAN;
                let mut y = f64::NAN;
                let mut z = f64::NAN;
                let mut q = 0.0;
                let mut indices: Vec<u32> = Vec::new();
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { name, .. } => {
                            let v = next_f64(&mut tok)?;
                            match name.as_str() {
                                "x" => x = v,
                                "y" => y = v,
                                "z" => z = v,
                                "quality" => q = v,
                                _ => {}
                            }
                        }
                        Property::List { name, .. } => {
                            let n = next_f64(&mut tok)? as usize;
                            let is_face_list = name == "vertex_indices" || name == "vertex_index";
                            for _ in 0..n {
                                let v = next_f64(&mut tok)?;
                                if is_face_list {
                                    indices.push(v as u32);
                                }
                            }
                        }
                    }
                }
                if elem.name == "vertex" {
                    vertices.push(Point3::new(x, y, z));
                    qualities.push(q);
                } else if elem.name == "face" {
                    if indices.len() != 3 {
                        return Err(err(format!(
                            "only triangular faces supported, got {}",
                            indices.len()
                        )));
                    }
                    faces.push([indices[0], indices[1], indices[2]]);
                }
            }
        }
    }

    Ok(PlyContents {
        vertices,
        qualities,
        faces,
    })
}

/// Writes a triangle mesh; vertex `quality` holds the posterior variance.
pub fn write_mesh_ply(mesh: &TriangleMesh, path: &Path, mode: PlyMode) -> Result<()> {
    let nv = mesh.vertices.len();
    for face in &mesh.faces {
        for &i in face {
            if i as usize >= nv {
                return Err(Error::InvalidMesh(format!(
                    "face index {i} out of range for {nv} vertices"
                )));
            }
        }
    }

    let mut out: Vec<u8> = Vec::new();
    let format = match mode {
        PlyMode::Ascii => "ascii",
        PlyMode::Binary => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float quality\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        nv,
        mesh.faces.len()
    )
    .expect("write to vec");

    match mode {
        PlyMode::Ascii => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                let q = mesh.variances.get(i).copied().unwrap_or(0.0) as f32;
                writeln!(out, "{} {} {} {}", v.x as f32, v.y as f32, v.z as f32, q)
                    .expect("write to vec");
            }
            for f in &mesh.faces {
                writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).expect("write to vec");
            }
        }
        PlyMode::Binary => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                let q = mesh.variances.get(i).copied().unwrap_or(0.0) as f32;
                out.extend_from_slice(&(v.x as f32).to_le_bytes());
                out.extend_from_slice(&(v.y as f32).to_le_bytes());
                out.extend_from_slice(&(v.z as f32).to_le_bytes());
                out.extend_from_slice(&q.to_le_bytes());
            }
            for f in &mesh.faces {
                out.push(3u8);
                for &i in f {
                    out.extend_from_slice(&i.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_mesh_ply(path: &Path) -> Result<TriangleMesh> {
    let contents = read_ply(path)?;
    let nv = contents.vertices.len();
    for face in &contents.faces {
        for &i in face {
            if i as usize >= nv {
                return Err(Error::InvalidMesh(format!(
                    "{}: face index {i} out of range for {nv} vertices",
                    path.display()
                )));
            }
        }
    }
    Ok(TriangleMesh {
        vertices: contents.vertices,
        variances: contents.qualities,
        faces: contents.faces,
    })
}

/// Writes a plain point cloud (vertex element only).
pub fn write_cloud_ply(points: &[Point3], path: &Path, mode: PlyMode) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let format = match mode {
        PlyMode::Ascii => "ascii",
        PlyMode::Binary => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )
    .expect("write to vec");
    match mode {
        PlyMode::Ascii => {
            for p in points {
                writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)
                    .expect("write to vec");
            }
        }
        PlyMode::Binary => {
            for p in points {
                out.extend_from_slice(&(p.x as f32).to_le_bytes());
                out.extend_from_slice(&(p.y as f32).to_le_bytes());
                out.extend_from_slice(&(p.z as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cloud_ply(path: &Path) -> Result<Vec<Point3>> {
    Ok(read_ply(path)?.vertices)
}
