//! Triangle meshes and a Wavefront OBJ reader (v/f records).

use super::RigError;
use crate::gsplat::math::{cross, norm, sub3, Vec3};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, RigError> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), RigError> {
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= self.vertices.len()) {
                return Err(RigError::Validation {
                    what: format!(
                        "face {fi} references vertex out of range (V = {})",
                        self.vertices.len()
                    ),
                });
            }
        }
        let degenerate: Vec<usize> = self
            .faces
            .iter()
            .enumerate()
            .filter(|(_, f)| self.face_area(f) < 1e-12)
            .map(|(fi, _)| fi)
            .collect();
        if !degenerate.is_empty() {
            return Err(RigError::DegenerateFaces { faces: degenerate });
        }
        // consistent winding: a shared edge must be traversed once in each
        // direction; a repeated directed edge means a flipped face
        let mut seen = std::collections::HashSet::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if !seen.insert(e) {
                    return Err(RigError::Validation {
                        what: format!(
                            "inconsistent winding: directed edge {e:?} repeated at face {fi}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    fn face_area(&self, f: &[usize; 3]) -> f64 {
        let a = self.vertices[f[0]];
        let b = self.vertices[f[1]];
        let c = self.vertices[f[2]];
        0.5 * norm(&cross(&sub3(&b, &a), &sub3(&c, &a)))
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for v in &self.vertices {
            c[0] += v[0];
            c[1] += v[1];
            c[2] += v[2];
        }
        let n = self.vertices.len().max(1) as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Diagonal of the axis-aligned bounding box; the densification size
    /// threshold is expressed as a fraction of this.
    pub fn extent(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        norm(&sub3(&hi, &lo))
    }

    pub fn load_obj(path: &Path) -> Result<Self, RigError> {
        let text = std::fs::read_to_string(path).map_err(|e| RigError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })?;
        parse_obj(&text).map_err(|(line, what)| RigError::Parse {
            path: path.display().to_string(),
            line,
            what,
        })
    }

    pub fn save_obj(&self, path: &Path) -> Result<(), RigError> {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        std::fs::write(path, out).map_err(|e| RigError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }
}

fn parse_obj(text: &str) -> Result<TriangleMesh, (usize, String)> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for slot in v.iter_mut() {
                    let tok = words
                        .next()
                        .ok_or((ln + 1, "vertex needs 3 coordinates".to_string()))?;
                    *slot = tok
                        .parse()
                        .map_err(|e| (ln + 1, format!("bad coordinate {tok:?}: {e}")))?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let idx: Result<Vec<usize>, (usize, String)> = words
                    .map(|w| {
                        // accept v, v/vt, v//vn, v/vt/vn; only the position index matters
                        let first = w.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|e| (ln + 1, format!("bad face index {w:?}: {e}")))?;
                        let resolved = if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            i - 1
                        };
                        if resolved < 0 {
                            return Err((ln + 1, format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect();
                let idx = idx?;
                if idx.len() < 3 {
                    return Err((ln + 1, format!("face has {} vertices, need ≥ 3", idx.len())));
                }
                // fan-triangulate polygons
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh { vertices, faces };
    mesh.validate().map_err(|e| (0, e.to_string()))?;
    Ok(mesh)
}

/// Flat fan of `n` faces in the z = 0 plane; handy synthetic head stand-in.
pub fn fan_mesh(n: usize) -> TriangleMesh {
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    let mut faces = Vec::new();
    for i in 0..=n {
        let theta = std::f64::consts::PI * i as f64 / n as f64;
        vertices.push([theta.cos(), theta.sin(), 0.0]);
    }
    for i in 0..n {
        faces.push([0, i + 1, i + 2]);
    }
    TriangleMesh { vertices, faces }
}
