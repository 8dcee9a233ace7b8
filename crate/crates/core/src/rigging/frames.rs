//! Per-facet binding frames (R, T, λ).

use super::{RigError, TriangleMesh};
use crate::gsplat::math::*;

/// Rigid frame of one triangle: rotation built from the first edge, the face
/// normal and their cross product; centroid; and a scalar scale factor.
#[derive(Debug, Clone)]
pub struct BindingFrame {
    pub rotation: Mat3,
    pub rotation_quat: Quat,
    pub centroid: Vec3,
    pub lambda: f64,
}

/// One frame per face. R columns are [e, n×e, n] (det +1), T the centroid,
/// and λ the mean of the first edge's length and the altitude from the
/// opposite vertex onto that edge.
pub fn compute_binding_frames(mesh: &TriangleMesh) -> Result<Vec<BindingFrame>, RigError> {
    mesh.faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let v0 = mesh.vertices[f[0]];
            let v1 = mesh.vertices[f[1]];
            let v2 = mesh.vertices[f[2]];
            let edge = sub3(&v1, &v0);
            let edge_len = norm(&edge);
            let n_raw = cross(&edge, &sub3(&v2, &v0));
            let area2 = norm(&n_raw);
            if edge_len < 1e-12 || area2 < 1e-12 {
                return Err(RigError::DegenerateFaces { faces: vec![fi] });
            }
            let e = scale3(&edge, 1.0 / edge_len);
            let n = scale3(&n_raw, 1.0 / area2);
            let ne = cross(&n, &e);
            let rotation = [
                [e[0], ne[0], n[0]],
                [e[1], ne[1], n[1]],
                [e[2], ne[2], n[2]],
            ];
            let centroid = [
                (v0[0] + v1[0] + v2[0]) / 3.0,
                (v0[1] + v1[1] + v2[1]) / 3.0,
                (v0[2] + v1[2] + v2[2]) / 3.0,
            ];
            // altitude from v2 onto the edge: twice the area over the base
            let h = area2 / edge_len;
            Ok(BindingFrame {
                rotation,
                rotation_quat: mat_to_quat(&rotation),
                centroid,
                lambda: 0.5 * (edge_len + h),
            })
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn unit_right_triangle() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn unit_right_triangle_frame_by_hand() {
        let frames = compute_binding_frames(&unit_right_triangle()).unwrap();
        let f = &frames[0];
        // e = +x, n = +z, n×e = +y
        for (i, col) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
            .iter()
            .enumerate()
        {
            for r in 0..3 {
                assert!((f.rotation[r][i] - col[r]).abs() < 1e-12);
            }
        }
        for k in 0..3 {
            let expect = if k == 2 { 0.0 } else { 1.0 / 3.0 };
            assert!((f.centroid[k] - expect).abs() < 1e-12);
        }
        // edge length 1, altitude from (0,1,0) onto the x-axis is 1
        assert!((f.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_moves_centroid_only() {
        let base = unit_right_triangle();
        let t = [3.0, -2.0, 0.5];
        let moved = TriangleMesh {
            vertices: base.vertices.iter().map(|v| add3(v, &t)).collect(),
            faces: base.faces.clone(),
        };
        let fa = &compute_binding_frames(&base).unwrap()[0];
        let fb = &compute_binding_frames(&moved).unwrap()[0];
        assert_eq!(fa.rotation, fb.rotation);
        assert!((fa.lambda - fb.lambda).abs() < 1e-15);
        for k in 0..3 {
            assert!((fb.centroid[k] - fa.centroid[k] - t[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_scale_doubles_lambda_and_centroid() {
        let base = unit_right_triangle();
        let scaled = TriangleMesh {
            vertices: base.vertices.iter().map(|v| scale3(v, 2.0)).collect(),
            faces: base.faces.clone(),
        };
        let fa = &compute_binding_frames(&base).unwrap()[0];
        let fb = &compute_binding_frames(&scaled).unwrap()[0];
        assert_eq!(fa.rotation, fb.rotation);
        assert!((fb.lambda - 2.0 * fa.lambda).abs() < 1e-12);
        for k in 0..3 {
            assert!((fb.centroid[k] - 2.0 * fa.centroid[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_are_proper_rotations() {
        let mesh = super::super::mesh::fan_mesh(7);
        for f in compute_binding_frames(&mesh).unwrap() {
            assert!(orthonormality_defect(&f.rotation) < 1e-9);
            assert!((mat3_det(&f.rotation) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_area_face_rejected() {
        let mesh = TriangleMesh {
            vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            faces: vec![[0, 1, 2]],
        };
        assert!(matches!(
            compute_binding_frames(&mesh),
            Err(RigError::DegenerateFaces { .. })
        ));
    }
}
