use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::Vec3;

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads an OBJ or STL (ASCII or binary) file, chosen by extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match extension(path).as_str() {
        "obj" => {
            let text = String::from_utf8_lossy(&bytes);
            parse_obj(&text)
        }
        "stl" => parse_stl(&bytes),
        other => Err(Error::UnsupportedFormat(other.to_string())),
    }
}

/// Writes OBJ or binary STL depending on the extension.
pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "obj" => write_obj(mesh).into_bytes(),
        "stl" => write_stl_binary(mesh),
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line,
                        msg: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad coordinate {tok:?}"),
                    })?;
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangularFace {
                        line,
                        count: refs.len(),
                    });
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad face index {r:?}"),
                    })?;
                    let resolved = match idx {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => -1,
                    };
                    if resolved < 0 {
                        return Err(Error::Parse {
                            line,
                            msg: format!("face index {idx} out of range"),
                        });
                    }
                    *slot = resolved as u32;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriMesh::new(vertices, triangles)
}

/// Parses STL, welding bit-identical corner positions into shared vertices.
pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh> {
    let corners = if is_binary_stl(bytes) {
        binary_stl_corners(bytes)
    } else {
        ascii_stl_corners(&String::from_utf8_lossy(bytes))?
    };
    if corners.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut lookup: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut indices = Vec::with_capacity(corners.len());
    for p in &corners {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let id = *lookup.entry(key).or_insert_with(|| {
            vertices.push(*p);
            (vertices.len() - 1) as u32
        });
        indices.push(id);
    }
    let triangles = indices
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    TriMesh::new(vertices, triangles)
}

fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    bytes.len() == 84 + 50 * n
}

fn binary_stl_corners(bytes: &[u8]) -> Vec<Vec3> {
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let read = |off: usize| {
        f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]) as f64
    };
    let mut out = Vec::with_capacity(3 * n);
    for t in 0..n {
        let base = 84 + 50 * t + 12;
        for c in 0..3 {
            let o = base + 12 * c;
            out.push(Vec3::new(read(o), read(o + 4), read(o + 8)));
        }
    }
    out
}

fn ascii_stl_corners(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    let mut in_loop = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("outer") => in_loop = 0,
            Some("vertex") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line,
                        msg: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad coordinate {tok:?}"),
                    })?;
                }
                out.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                in_loop += 1;
            }
            Some("endloop") if in_loop != 3 => {
                return Err(Error::NonTriangularFace {
                    line,
                    count: in_loop,
                });
            }
            _ => {}
        }
    }
    if out.len() % 3 != 0 {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: "incomplete facet".into(),
        });
    }
    Ok(out)
}

/// OBJ text with shortest round-trip float formatting.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices().len() * 48 + mesh.num_triangles() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_stl_binary(mesh: &TriMesh) -> Vec<u8> {
    let n = mesh.num_triangles();
    let mut out = Vec::with_capacity(84 + 50 * n);
    let mut header = [0u8; 80];
    header[..4].copy_from_slice(b"gala");
    out.extend_from_slice(&header);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    let push = |out: &mut Vec<u8>, v: &Vec3| {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    };
    for f in 0..n {
        push(&mut out, &mesh.face_normals()[f]);
        for v in mesh.triangle(f) {
            push(&mut out, &v);
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}
