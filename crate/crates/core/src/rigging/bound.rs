//! Anchor/neural Gaussians in canonical coordinates and the canonical →
//! deformable conversion.

use super::{BindingFrame, RigError, TriangleMesh};
use crate::gsplat::math::*;
use crate::gsplat::Gaussian3D;
use crate::numcore::{NumError, Tape, Var};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One Gaussian per mesh facet, never pruned.
#[derive(Debug, Clone)]
pub struct AnchorGaussian {
    pub params: Gaussian3D,
    pub face_index: usize,
}

/// Gaussian spawned by density control, bound to an anchor whose binding
/// frame and offset correction it shares.
#[derive(Debug, Clone)]
pub struct NeuralGaussian {
    pub params: Gaussian3D,
    pub anchor_index: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BoundGaussianSet {
    pub anchors: Vec<AnchorGaussian>,
    pub neurals: Vec<NeuralGaussian>,
    /// Per-anchor world-space positional corrections, added after the frame
    /// transform.
    pub offsets: Vec<Vec3>,
}

/// Canonical defaults: zero position, identity rotation, unit scale, opacity
/// logit zero (α = ½ — the literal zero-opacity reading would render
/// nothing), mid-gray color.
fn canonical_gaussian() -> Gaussian3D {
    Gaussian3D {
        position: [0.0; 3],
        rotation: QUAT_IDENTITY,
        log_scale: [0.0; 3],
        opacity_logit: 0.0,
        color: [0.5, 0.5, 0.5],
    }
}

/// One anchor per facet, canonical defaults, no neurals, zero offsets.
pub fn init_anchors(mesh: &TriangleMesh) -> Result<BoundGaussianSet, RigError> {
    mesh.validate()?;
    let anchors = (0..mesh.faces.len())
        .map(|face_index| AnchorGaussian {
            params: canonical_gaussian(),
            face_index,
        })
        .collect::<Vec<_>>();
    let offsets = vec![[0.0; 3]; anchors.len()];
    Ok(BoundGaussianSet {
        anchors,
        neurals: Vec::new(),
        offsets,
    })
}

impl BoundGaussianSet {
    pub fn gaussian_count(&self) -> usize {
        self.anchors.len() + self.neurals.len()
    }

    /// Face index per Gaussian, anchors first then neurals.
    pub fn face_map(&self) -> Vec<usize> {
        let mut map: Vec<usize> = self.anchors.iter().map(|a| a.face_index).collect();
        map.extend(
            self.neurals
                .iter()
                .map(|n| self.anchors[n.anchor_index].face_index),
        );
        map
    }

    /// Anchor index per Gaussian, anchors first then neurals.
    pub fn anchor_map(&self) -> Vec<usize> {
        let mut map: Vec<usize> = (0..self.anchors.len()).collect();
        map.extend(self.neurals.iter().map(|n| n.anchor_index));
        map
    }

    pub fn validate(&self, face_count: usize) -> Result<(), RigError> {
        if self.offsets.len() != self.anchors.len() {
            return Err(RigError::Validation {
                what: format!(
                    "offset count {} does not match anchor count {}",
                    self.offsets.len(),
                    self.anchors.len()
                ),
            });
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if a.face_index >= face_count {
                return Err(RigError::Validation {
                    what: format!("anchor {i} bound to missing face {}", a.face_index),
                });
            }
        }
        for (i, n) in self.neurals.iter().enumerate() {
            if n.anchor_index >= self.anchors.len() {
                return Err(RigError::Validation {
                    what: format!("neural {i} bound to missing anchor {}", n.anchor_index),
                });
            }
        }
        Ok(())
    }

    /// Iterate canonical parameters, anchors first then neurals.
    pub fn iter_params(&self) -> impl Iterator<Item = &Gaussian3D> {
        self.anchors
            .iter()
            .map(|a| &a.params)
            .chain(self.neurals.iter().map(|n| &n.params))
    }

    pub fn iter_params_mut(&mut self) -> impl Iterator<Item = &mut Gaussian3D> {
        self.anchors
            .iter_mut()
            .map(|a| &mut a.params)
            .chain(self.neurals.iter_mut().map(|n| &mut n.params))
    }
}

/// Canonical → deformable: μ_d = λRμ_c + T + c, r_d = q_R ⊗ r_c,
/// s_d = λ·s_c. Offsets resolve through each Gaussian's anchor.
pub fn to_deformable(
    set: &BoundGaussianSet,
    frames: &[BindingFrame],
) -> Result<Vec<Gaussian3D>, RigError> {
    let face_map = set.face_map();
    let anchor_map = set.anchor_map();
    set.iter_params()
        .zip(face_map.iter().zip(&anchor_map))
        .map(|(g, (&face, &anchor))| {
            let frame = frames.get(face).ok_or_else(|| RigError::Validation {
                what: format!("face {face} has no binding frame ({} frames)", frames.len()),
            })?;
            let c = set.offsets[anchor];
            let rotated = mat3_mul_vec(&frame.rotation, &g.position);
            let position = [
                frame.lambda * rotated[0] + frame.centroid[0] + c[0],
                frame.lambda * rotated[1] + frame.centroid[1] + c[1],
                frame.lambda * rotated[2] + frame.centroid[2] + c[2],
            ];
            let log_lambda = frame.lambda.ln();
            Ok(Gaussian3D {
                position,
                rotation: quat_mul(&frame.rotation_quat, &g.rotation),
                log_scale: [
                    g.log_scale[0] + log_lambda,
                    g.log_scale[1] + log_lambda,
                    g.log_scale[2] + log_lambda,
                ],
                opacity_logit: g.opacity_logit,
                color: g.color,
            })
        })
        .collect()
}

/// Tape view of [`to_deformable`]: same math, expressed as gather /
/// row-transform / add nodes so gradients reach μ_c, r_c, s_c and c.
/// Returns (positions G×3, rotations G×4, log-scales G×3).
#[allow(clippy::too_many_arguments)]
pub fn to_deformable_on_tape(
    tape: &mut Tape,
    mu_c: Var,
    quat_c: Var,
    log_s_c: Var,
    offsets: Var,
    frames: &[BindingFrame],
    face_map: &[usize],
    anchor_map: &[usize],
) -> Result<(Var, Var, Var), NumError> {
    let g = face_map.len();
    let mut pos_mats = Vec::with_capacity(g * 9);
    let mut quat_mats = Vec::with_capacity(g * 16);
    let mut centroids = Vec::with_capacity(g * 3);
    let mut log_lambdas = Vec::with_capacity(g * 3);
    for &face in face_map {
        let f = &frames[face];
        for r in 0..3 {
            for c in 0..3 {
                pos_mats.push(f.lambda * f.rotation[r][c]);
            }
        }
        quat_mats.extend_from_slice(&quat_left_matrix(&f.rotation_quat));
        centroids.extend_from_slice(&f.centroid);
        let ll = f.lambda.ln();
        log_lambdas.extend_from_slice(&[ll, ll, ll]);
    }

    let rotated = tape.row_transform(mu_c, pos_mats, 3)?;
    let t_const = tape.constant(centroids, vec![g, 3]);
    let shifted = tape.add(rotated, t_const)?;
    let gathered = tape.gather_rows(offsets, anchor_map)?;
    let positions = tape.add(shifted, gathered)?;

    let rotations = tape.row_transform(quat_c, quat_mats, 4)?;

    let ll_const = tape.constant(log_lambdas, vec![g, 3]);
    let log_scales = tape.add(log_s_c, ll_const)?;

    Ok((positions, rotations, log_scales))
}

// ── checkpoint: JSON header + f64-LE payload ────────────────────────

const GAUSSIAN_FIELDS: usize = 14; // pos 3, quat 4, log_scale 3, opacity 1, color 3

#[derive(Serialize, Deserialize)]
struct BoundSetHeader {
    anchor_count: usize,
    neural_count: usize,
    face_indices: Vec<usize>,
    anchor_indices: Vec<usize>,
    payload: String,
}

fn pack_gaussian(g: &Gaussian3D, out: &mut Vec<f64>) {
    out.extend_from_slice(&g.position);
    out.extend_from_slice(&g.rotation);
    out.extend_from_slice(&g.log_scale);
    out.push(g.opacity_logit);
    out.extend_from_slice(&g.color);
}

fn unpack_gaussian(data: &[f64]) -> Gaussian3D {
    Gaussian3D {
        position: [data[0], data[1], data[2]],
        rotation: [data[3], data[4], data[5], data[6]],
        log_scale: [data[7], data[8], data[9]],
        opacity_logit: data[10],
        color: [data[11], data[12], data[13]],
    }
}

/// Write `<path>` (JSON) plus a sibling binary payload holding anchors,
/// neurals and offsets as little-endian f64.
pub fn save_bound_set(set: &BoundGaussianSet, path: &Path) -> Result<(), RigError> {
    let payload_path = path.with_extension("bin");
    let payload_name = payload_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "boundset.bin".into());
    let header = BoundSetHeader {
        anchor_count: set.anchors.len(),
        neural_count: set.neurals.len(),
        face_indices: set.anchors.iter().map(|a| a.face_index).collect(),
        anchor_indices: set.neurals.iter().map(|n| n.anchor_index).collect(),
        payload: payload_name,
    };
    let io_err = |p: &Path, e: std::io::Error| RigError::Io {
        path: p.display().to_string(),
        what: e.to_string(),
    };
    std::fs::write(
        path,
        serde_json::to_string_pretty(&header).expect("header serializes"),
    )
    .map_err(|e| io_err(path, e))?;

    let mut floats =
        Vec::with_capacity(set.gaussian_count() * GAUSSIAN_FIELDS + set.offsets.len() * 3);
    for g in set.iter_params() {
        pack_gaussian(g, &mut floats);
    }
    for o in &set.offsets {
        floats.extend_from_slice(o);
    }
    let mut bytes = Vec::with_capacity(floats.len() * 8);
    for f in floats {
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    std::fs::write(&payload_path, bytes).map_err(|e| io_err(&payload_path, e))
}

pub fn load_bound_set(path: &Path) -> Result<BoundGaussianSet, RigError> {
    let io_err = |p: &Path, e: String| RigError::Io {
        path: p.display().to_string(),
        what: e,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e.to_string()))?;
    let header: BoundSetHeader = serde_json::from_str(&text).map_err(|e| RigError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        what: e.to_string(),
    })?;
    let payload_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload);
    let bytes = std::fs::read(&payload_path).map_err(|e| io_err(&payload_path, e.to_string()))?;
    let expected = (header.anchor_count + header.neural_count) * GAUSSIAN_FIELDS * 8
        + header.anchor_count * 3 * 8;
    if bytes.len() != expected {
        return Err(RigError::Parse {
            path: payload_path.display().to_string(),
            line: 0,
            what: format!("payload holds {} bytes, expected {expected}", bytes.len()),
        });
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut cursor = 0;
    let next_gaussian = |cursor: &mut usize| {
        let g = unpack_gaussian(&floats[*cursor..*cursor + GAUSSIAN_FIELDS]);
        *cursor += GAUSSIAN_FIELDS;
        g
    };
    let anchors = header
        .face_indices
        .iter()
        .map(|&face_index| AnchorGaussian {
            params: next_gaussian(&mut cursor),
            face_index,
        })
        .collect();
    let neurals = header
        .anchor_indices
        .iter()
        .map(|&anchor_index| NeuralGaussian {
            params: next_gaussian(&mut cursor),
            anchor_index,
        })
        .collect();
    let mut offsets = Vec::with_capacity(header.anchor_count);
    for _ in 0..header.anchor_count {
        offsets.push([floats[cursor], floats[cursor + 1], floats[cursor + 2]]);
        cursor += 3;
    }
    Ok(BoundGaussianSet {
        anchors,
        neurals,
        offsets,
    })
}
