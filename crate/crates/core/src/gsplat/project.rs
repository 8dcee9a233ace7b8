//! Gaussian density evaluation and perspective projection to screen space.

use super::math::*;
use super::{Camera, Gaussian3D, GsplatError, Splat2D, CUTOFF_SIGMA, DILATION};

/// Σ = R S Sᵀ Rᵀ from a (renormalized) quaternion and log-scales.
pub fn covariance_from_rs(rotation: &Quat, log_scale: &Vec3) -> Mat3 {
    let r = quat_to_mat(&quat_normalize(rotation));
    let s2 = [
        (2.0 * log_scale[0]).exp(),
        (2.0 * log_scale[1]).exp(),
        (2.0 * log_scale[2]).exp(),
    ];
    // R · diag(s²) · Rᵀ
    let mut rd = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rd[i][j] = r[i][j] * s2[j];
        }
    }
    mat3_mul(&rd, &mat3_transpose(&r))
}

/// Gaussian density exp(−½ (p−p_k)ᵀ Σ⁻¹ (p−p_k)), in (0, 1].
pub fn evaluate_density(g: &Gaussian3D, p: &Vec3) -> Result<f64, GsplatError> {
    let sigma = covariance_from_rs(&g.rotation, &g.log_scale);
    let inv = mat3_inverse(&sigma).ok_or_else(|| GsplatError::DegenerateScale {
        what: format!("covariance is singular for log_scale {:?}", g.log_scale),
    })?;
    let d = sub3(p, &g.position);
    let q = dot(&d, &mat3_mul_vec(&inv, &d));
    Ok((-0.5 * q).exp())
}

/// Everything the backward pass needs about one projected Gaussian.
#[derive(Debug, Clone)]
pub struct Projected {
    pub splat: Splat2D,
    /// Camera-space mean.
    pub t: Vec3,
    /// Perspective Jacobian at the mean (2×3, row-major).
    pub jac: [f64; 6],
    /// Inclusive pixel-index bounds of the truncated footprint.
    pub bounds: [i64; 4],
}

/// Project one Gaussian; `None` means culled (behind the near plane or with
/// a footprint that misses the viewport entirely).
pub fn project_full(g: &Gaussian3D, cam: &Camera, index: usize) -> Option<Projected> {
    let t = cam.to_camera_space(&g.position);
    if t[2] <= cam.near {
        return None;
    }
    let inv_z = 1.0 / t[2];
    let mean2d = [
        cam.fx * t[0] * inv_z + cam.cx,
        cam.fy * t[1] * inv_z + cam.cy,
    ];

    let jac = [
        cam.fx * inv_z,
        0.0,
        -cam.fx * t[0] * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t[1] * inv_z * inv_z,
    ];

    let sigma = covariance_from_rs(&g.rotation, &g.log_scale);
    // M = J · R_wc maps world offsets to screen offsets
    let r = cam.rotation();
    let mut m = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            m[i][j] = jac[i * 3] * r[0][j] + jac[i * 3 + 1] * r[1][j] + jac[i * 3 + 2] * r[2][j];
        }
    }
    let mut cov = [0.0; 3]; // xx, xy, yy
    {
        // M Σ Mᵀ
        let mut ms = [[0.0; 3]; 2];
        for i in 0..2 {
            for j in 0..3 {
                ms[i][j] = m[i][0] * sigma[0][j] + m[i][1] * sigma[1][j] + m[i][2] * sigma[2][j];
            }
        }
        cov[0] = ms[0][0] * m[0][0] + ms[0][1] * m[0][1] + ms[0][2] * m[0][2] + DILATION;
        cov[1] = ms[0][0] * m[1][0] + ms[0][1] * m[1][1] + ms[0][2] * m[1][2];
        cov[2] = ms[1][0] * m[1][0] + ms[1][1] * m[1][1] + ms[1][2] * m[1][2] + DILATION;
    }

    // truncated footprint from the largest eigenvalue
    let half_trace = 0.5 * (cov[0] + cov[2]);
    let disc = (0.5 * (cov[0] - cov[2])).hypot(cov[1]);
    let lambda_max = (half_trace + disc).max(0.0);
    let radius = CUTOFF_SIGMA * lambda_max.sqrt();

    // pixel (ix, iy) samples at (ix+0.5, iy+0.5)
    let min_x = (mean2d[0] - radius - 0.5).ceil() as i64;
    let max_x = (mean2d[0] + radius - 0.5).floor() as i64;
    let min_y = (mean2d[1] - radius - 0.5).ceil() as i64;
    let max_y = (mean2d[1] + radius - 0.5).floor() as i64;
    let min_x = min_x.max(0);
    let min_y = min_y.max(0);
    let max_x = max_x.min(cam.width as i64 - 1);
    let max_y = max_y.min(cam.height as i64 - 1);
    if min_x > max_x || min_y > max_y {
        return None;
    }

    Some(Projected {
        splat: Splat2D {
            mean2d,
            cov2d: cov,
            depth: t[2],
            color: g.color,
            alpha: super::sigmoid(g.opacity_logit),
            gaussian_index: index,
        },
        t,
        jac,
        bounds: [min_x, max_x, min_y, max_y],
    })
}

pub fn project_gaussian(g: &Gaussian3D, cam: &Camera) -> Option<Splat2D> {
    project_full(g, cam, 0).map(|p| p.splat)
}
