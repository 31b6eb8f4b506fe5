//! Minimal Wavefront OBJ reading and writing (positions and faces only).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Read vertex positions and faces; polygons with more than three corners
/// are fan-triangulated. Indices are returned 0-based.
pub fn read_obj(path: impl AsRef<Path>) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text).map_err(|m| Error::parse(path, m))
}

pub fn parse_obj(text: &str) -> std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", ln + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", ln + 1));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|e| format!("line {}: {e}", ln + 1))?;
                        let n = verts.len() as i64;
                        let k = if i < 0 { n + i } else { i - 1 };
                        if k < 0 || k >= n {
                            return Err(format!("line {}: face index {i} out of range", ln + 1));
                        }
                        Ok(k as usize)
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs 3 indices", ln + 1));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

pub fn obj_string(verts: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(verts.len() * 40 + faces.len() * 20);
    for v in verts {
        let _ = writeln!(s, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: impl AsRef<Path>, verts: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(verts, faces)).map_err(|e| Error::io(path, e))
}
