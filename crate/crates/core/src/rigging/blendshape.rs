//! Linear blendshape rig: basis · params displaces vertices, the POSE group
//! then applies global and neck rotations.
//!
//! Basis file layout (`BSB1`): 4-byte magic, V and P as u64 LE, then
//! V·3·P f64 LE values, row-major with one row per vertex coordinate.

use super::{RigError, TriangleMesh};
use crate::gsplat::math::*;
use std::io::Read;
use std::path::Path;

pub const BASIS_MAGIC: &[u8; 4] = b"BSB1";

/// Sizes of the motion parameter groups, mirroring the metric grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MotionGroups {
    pub exp: usize,
    pub jaw: usize,
    pub pose: usize,
}

impl Default for MotionGroups {
    fn default() -> Self {
        MotionGroups {
            exp: 50,
            jaw: 3,
            pose: 6,
        }
    }
}

impl MotionGroups {
    pub fn total(&self) -> usize {
        self.exp + self.jaw + self.pose
    }

    pub fn pose_offset(&self) -> usize {
        self.exp + self.jaw
    }
}

#[derive(Debug, Clone)]
pub struct BlendshapeBasis {
    pub vertex_count: usize,
    pub param_count: usize,
    /// (V·3) × P, row-major.
    pub data: Vec<f64>,
}

impl BlendshapeBasis {
    pub fn zeros(vertex_count: usize, param_count: usize) -> Self {
        BlendshapeBasis {
            vertex_count,
            param_count,
            data: vec![0.0; vertex_count * 3 * param_count],
        }
    }

    pub fn set(&mut self, vertex: usize, coord: usize, param: usize, value: f64) {
        self.data[(vertex * 3 + coord) * self.param_count + param] = value;
    }

    pub fn save(&self, path: &Path) -> Result<(), RigError> {
        let mut bytes = Vec::with_capacity(4 + 16 + self.data.len() * 8);
        bytes.extend_from_slice(BASIS_MAGIC);
        bytes.extend_from_slice(&(self.vertex_count as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.param_count as u64).to_le_bytes());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| RigError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RigError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| RigError::Io {
                path: path.display().to_string(),
                what: e.to_string(),
            })?;
        let parse_err = |what: String| RigError::Parse {
            path: path.display().to_string(),
            line: 0,
            what,
        };
        if bytes.len() < 20 || &bytes[0..4] != BASIS_MAGIC {
            return Err(parse_err("missing BSB1 magic".into()));
        }
        let v = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let p = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let expected = 20 + v * 3 * p * 8;
        if bytes.len() != expected {
            return Err(parse_err(format!(
                "basis payload holds {} bytes, expected {expected} for V={v} P={p}",
                bytes.len()
            )));
        }
        let data = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(BlendshapeBasis {
            vertex_count: v,
            param_count: p,
            data,
        })
    }
}

fn rodrigues(axis_angle: &Vec3) -> Mat3 {
    let angle = norm(axis_angle);
    if angle < 1e-12 {
        return MAT3_IDENTITY;
    }
    quat_to_mat(&quat_from_axis_angle(axis_angle, angle))
}

/// No-op for a zero angle so that zero pose reproduces vertices bit-exactly.
fn rotate_about(vertices: &mut [Vec3], pivot: &Vec3, axis_angle: &Vec3) {
    if norm(axis_angle) < 1e-12 {
        return;
    }
    let rot = rodrigues(axis_angle);
    for v in vertices.iter_mut() {
        let local = sub3(v, pivot);
        *v = add3(&mat3_mul_vec(&rot, &local), pivot);
    }
}

/// Deform the base mesh by one motion frame: linear displacement from the
/// basis, then the neck rotation (pose dims 3..6) about the neck pivot, then
/// the global rotation (pose dims 0..3) about the displaced mesh centroid.
pub fn blendshape_apply(
    base: &TriangleMesh,
    basis: &BlendshapeBasis,
    groups: &MotionGroups,
    params: &[f64],
    neck_pivot: Option<Vec3>,
) -> Result<TriangleMesh, RigError> {
    if basis.vertex_count != base.vertices.len() {
        return Err(RigError::Validation {
            what: format!(
                "basis covers {} vertices, mesh has {}",
                basis.vertex_count,
                base.vertices.len()
            ),
        });
    }
    if basis.param_count != params.len() || groups.total() != params.len() {
        return Err(RigError::Validation {
            what: format!(
                "parameter count mismatch: basis {} / groups {} / frame {}",
                basis.param_count,
                groups.total(),
                params.len()
            ),
        });
    }
    let p = basis.param_count;
    let mut vertices: Vec<Vec3> = base
        .vertices
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mut out = *v;
            #[allow(clippy::needless_range_loop)]
            for coord in 0..3 {
                let row = &basis.data[(vi * 3 + coord) * p..(vi * 3 + coord + 1) * p];
                out[coord] += row.iter().zip(params).map(|(b, q)| b * q).sum::<f64>();
            }
            out
        })
        .collect();

    let off = groups.pose_offset();
    let global_aa = [params[off], params[off + 1], params[off + 2]];
    let neck_aa = [params[off + 3], params[off + 4], params[off + 5]];

    let displaced_centroid = {
        let mut c = [0.0; 3];
        for v in &vertices {
            c = add3(&c, v);
        }
        scale3(&c, 1.0 / vertices.len().max(1) as f64)
    };
    let pivot = neck_pivot.unwrap_or(displaced_centroid);
    rotate_about(&mut vertices, &pivot, &neck_aa);

    let centroid = {
        let mut c = [0.0; 3];
        for v in &vertices {
            c = add3(&c, v);
        }
        scale3(&c, 1.0 / vertices.len().max(1) as f64)
    };
    rotate_about(&mut vertices, &centroid, &global_aa);

    Ok(TriangleMesh {
        vertices,
        faces: base.faces.clone(),
    })
}
