//! Analytic gradients through projection and alpha blending.
//!
//! The backward pass recomputes per-pixel blending (cheaper than caching it)
//! in exactly the forward traversal order, reverse-scans each pixel's
//! contribution list, then chains screen-space gradients through the
//! perspective Jacobian and the covariance factorization back to every
//! Gaussian parameter.

use super::math::*;
use super::project::{project_full, Projected};
use super::raster::{build_tile_lists, prepare_splat, splat_weight, Prepared, TILE_SIZE};
use super::{Camera, Gaussian3D, ALPHA_CLAMP, TRANSMITTANCE_MIN};
use crate::numcore::{CustomOp, Tape, Var};
use rayon::prelude::*;
use std::cell::RefCell;
use std::rc::Rc;

#[derive(Debug, Clone)]
pub struct RasterGrads {
    pub d_position: Vec<Vec3>,
    pub d_rotation: Vec<[f64; 4]>,
    pub d_log_scale: Vec<Vec3>,
    pub d_opacity_logit: Vec<f64>,
    pub d_color: Vec<Vec3>,
    /// ‖∂L/∂mean2d‖ per Gaussian; densification pressure signal.
    pub mean2d_grad_norm: Vec<f64>,
}

impl RasterGrads {
    fn zeros(n: usize) -> Self {
        RasterGrads {
            d_position: vec![[0.0; 3]; n],
            d_rotation: vec![[0.0; 4]; n],
            d_log_scale: vec![[0.0; 3]; n],
            d_opacity_logit: vec![0.0; n],
            d_color: vec![[0.0; 3]; n],
            mean2d_grad_norm: vec![0.0; n],
        }
    }
}

/// Screen-space gradient accumulators for one prepared splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatAcc {
    d_mean: [f64; 2],
    /// gradient w.r.t. the stored inverse-covariance triple (ixx, ixy, iyy)
    d_inv: [f64; 3],
    /// gradient w.r.t. the splat's opacity (post-sigmoid)
    d_alpha: f64,
    d_color: [f64; 3],
}

impl SplatAcc {
    fn add(&mut self, o: &SplatAcc) {
        for k in 0..2 {
            self.d_mean[k] += o.d_mean[k];
        }
        for k in 0..3 {
            self.d_inv[k] += o.d_inv[k];
            self.d_color[k] += o.d_color[k];
        }
        self.d_alpha += o.d_alpha;
    }
}

/// Gradients of a scalar loss w.r.t. every Gaussian parameter, given the
/// upstream per-pixel image gradient (H·W·3 row-major).
#[allow(clippy::needless_range_loop)]
pub fn rasterize_backward(
    gaussians: &[Gaussian3D],
    cam: &Camera,
    background: &Vec3,
    d_image: &[f64],
) -> RasterGrads {
    assert_eq!(
        d_image.len(),
        cam.width * cam.height * 3,
        "upstream gradient size"
    );
    let mut grads = RasterGrads::zeros(gaussians.len());
    if gaussians.is_empty() {
        return grads;
    }

    let mut projected: Vec<Projected> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_full(g, cam, i))
        .collect();
    projected.sort_by(|a, b| {
        a.splat
            .depth
            .total_cmp(&b.splat.depth)
            .then(a.splat.gaussian_index.cmp(&b.splat.gaussian_index))
    });
    let prepared: Vec<Prepared> = projected
        .iter()
        .map(|p| prepare_splat(&p.splat, p.bounds))
        .collect();
    let grid = build_tile_lists(&prepared, cam.width, cam.height);

    // pixel-level sweep, parallel over tiles; each tile returns sparse
    // accumulators aligned with its own splat list so reduction in tile
    // order stays bit-deterministic
    let tile_accs: Vec<Vec<SplatAcc>> = (0..grid.lists.len())
        .into_par_iter()
        .map(|tile| {
            let list = &grid.lists[tile];
            let mut acc = vec![SplatAcc::default(); list.len()];
            if list.is_empty() {
                return acc;
            }
            let tx = tile % grid.tiles_x;
            let ty = tile / grid.tiles_x;
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let x1 = (x0 + TILE_SIZE).min(cam.width);
            let y1 = (y0 + TILE_SIZE).min(cam.height);

            // (position in tile list, effective alpha, raw weight, clamped)
            let mut contribs: Vec<(usize, f64, f64, bool)> = Vec::with_capacity(list.len());
            let mut trans: Vec<f64> = Vec::with_capacity(list.len() + 1);
            for py in y0..y1 {
                for px in x0..x1 {
                    let cxp = px as f64 + 0.5;
                    let cyp = py as f64 + 0.5;
                    contribs.clear();
                    trans.clear();
                    let mut transmittance = 1.0;
                    for (li, &si) in list.iter().enumerate() {
                        let s = &prepared[si];
                        let (pxi, pyi) = (px as i64, py as i64);
                        if pxi < s.bounds[0]
                            || pxi > s.bounds[1]
                            || pyi < s.bounds[2]
                            || pyi > s.bounds[3]
                        {
                            continue;
                        }
                        let w = splat_weight(s, cxp, cyp);
                        let raw = s.alpha * w;
                        let clamped = raw > ALPHA_CLAMP;
                        let a = raw.min(ALPHA_CLAMP);
                        contribs.push((li, a, w, clamped));
                        trans.push(transmittance);
                        transmittance *= 1.0 - a;
                        if transmittance < TRANSMITTANCE_MIN {
                            break;
                        }
                    }

                    let gp: &[f64; 3] = d_image
                        [(py * cam.width + px) * 3..(py * cam.width + px) * 3 + 3]
                        .try_into()
                        .expect("rgb triple");
                    // background picks up the residual transmittance
                    let mut g_t =
                        gp[0] * background[0] + gp[1] * background[1] + gp[2] * background[2];
                    for k in (0..contribs.len()).rev() {
                        let (li, a, w, clamped) = contribs[k];
                        let s = &prepared[list[li]];
                        let t_k = trans[k];
                        let slot = &mut acc[li];
                        for c in 0..3 {
                            slot.d_color[c] += gp[c] * t_k * a;
                        }
                        let direct =
                            (gp[0] * s.color[0] + gp[1] * s.color[1] + gp[2] * s.color[2]) * t_k;
                        let g_a = direct - g_t * t_k;
                        g_t = (gp[0] * s.color[0] + gp[1] * s.color[1] + gp[2] * s.color[2]) * a
                            + g_t * (1.0 - a);
                        if clamped {
                            continue;
                        }
                        // a = α·w: split into opacity and weight paths
                        let g_w = g_a * s.alpha;
                        slot.d_alpha += g_a * w;
                        let dx = cxp - s.mean[0];
                        let dy = cyp - s.mean[1];
                        let gw_w = g_w * w;
                        slot.d_mean[0] += gw_w * (s.inv[0] * dx + s.inv[1] * dy);
                        slot.d_mean[1] += gw_w * (s.inv[1] * dx + s.inv[2] * dy);
                        slot.d_inv[0] += -0.5 * gw_w * dx * dx;
                        slot.d_inv[1] += -gw_w * dx * dy;
                        slot.d_inv[2] += -0.5 * gw_w * dy * dy;
                    }
                }
            }
            acc
        })
        .collect();

    let mut per_splat = vec![SplatAcc::default(); prepared.len()];
    for (tile, accs) in tile_accs.iter().enumerate() {
        for (li, a) in accs.iter().enumerate() {
            per_splat[grid.lists[tile][li]].add(a);
        }
    }

    // chain each splat's screen-space gradients back to its 3D parameters
    type ChainedGrad = (usize, Vec3, [f64; 4], Vec3, f64, Vec3, f64);
    let chained: Vec<ChainedGrad> = projected
        .par_iter()
        .zip(per_splat.par_iter())
        .map(|(proj, acc)| {
            let gi = proj.splat.gaussian_index;
            let g = &gaussians[gi];
            let (d_pos, d_rot, d_ls) = chain_to_3d(proj, acc, g, cam);
            let alpha = proj.splat.alpha;
            let d_logit = acc.d_alpha * alpha * (1.0 - alpha);
            let gn = (acc.d_mean[0] * acc.d_mean[0] + acc.d_mean[1] * acc.d_mean[1]).sqrt();
            (gi, d_pos, d_rot, d_ls, d_logit, acc.d_color, gn)
        })
        .collect();

    for (gi, d_pos, d_rot, d_ls, d_logit, d_color, gn) in chained {
        grads.d_position[gi] = d_pos;
        grads.d_rotation[gi] = d_rot;
        grads.d_log_scale[gi] = d_ls;
        grads.d_opacity_logit[gi] = d_logit;
        grads.d_color[gi] = d_color;
        grads.mean2d_grad_norm[gi] = gn;
    }
    grads
}

fn chain_to_3d(
    proj: &Projected,
    acc: &SplatAcc,
    g: &Gaussian3D,
    cam: &Camera,
) -> (Vec3, [f64; 4], Vec3) {
    let cov = proj.splat.cov2d;
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    let a_mat = [[cov[2] / det, -cov[1] / det], [-cov[1] / det, cov[0] / det]];

    // stored triple → per-entry matrix gradient of A, then dΣ = −A·G_A·A
    let g_a = [
        [acc.d_inv[0], acc.d_inv[1] * 0.5],
        [acc.d_inv[1] * 0.5, acc.d_inv[2]],
    ];
    let mut g_sigma2d = [[0.0; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += a_mat[p][k] * g_a[k][l] * a_mat[l][q];
                }
            }
            g_sigma2d[p][q] = -s;
        }
    }

    // M = J · R_wc
    let r_cw = cam.rotation();
    let jac = &proj.jac;
    let mut m = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            m[i][j] =
                jac[i * 3] * r_cw[0][j] + jac[i * 3 + 1] * r_cw[1][j] + jac[i * 3 + 2] * r_cw[2][j];
        }
    }
    let sigma3 = super::project::covariance_from_rs(&g.rotation, &g.log_scale);

    // G_Σ3 = Mᵀ G2 M
    let mut g_sigma3 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += m[k][i] * g_sigma2d[k][l] * m[l][j];
                }
            }
            g_sigma3[i][j] = s;
        }
    }

    // G_M = (G2 + G2ᵀ) M Σ3
    let mut g2_sym = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g2_sym[i][j] = g_sigma2d[i][j] + g_sigma2d[j][i];
        }
    }
    let mut m_sigma = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            m_sigma[i][j] =
                m[i][0] * sigma3[0][j] + m[i][1] * sigma3[1][j] + m[i][2] * sigma3[2][j];
        }
    }
    let mut g_m = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            g_m[i][j] = g2_sym[i][0] * m_sigma[0][j] + g2_sym[i][1] * m_sigma[1][j];
        }
    }

    // G_J = G_M · R_wcᵀ
    let mut g_j = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            g_j[i][j] = g_m[i][0] * r_cw[j][0] + g_m[i][1] * r_cw[j][1] + g_m[i][2] * r_cw[j][2];
        }
    }

    // t-dependence of J and of the projected mean
    let t = proj.t;
    let inv_z = 1.0 / t[2];
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;
    let mut g_t = [0.0; 3];
    g_t[0] += g_j[0][2] * (-cam.fx * inv_z2);
    g_t[1] += g_j[1][2] * (-cam.fy * inv_z2);
    g_t[2] += g_j[0][0] * (-cam.fx * inv_z2)
        + g_j[0][2] * (2.0 * cam.fx * t[0] * inv_z3)
        + g_j[1][1] * (-cam.fy * inv_z2)
        + g_j[1][2] * (2.0 * cam.fy * t[1] * inv_z3);
    g_t[0] += acc.d_mean[0] * cam.fx * inv_z;
    g_t[1] += acc.d_mean[1] * cam.fy * inv_z;
    g_t[2] += -acc.d_mean[0] * cam.fx * t[0] * inv_z2 - acc.d_mean[1] * cam.fy * t[1] * inv_z2;

    // t = R_wc p + trans
    let d_pos = mat3_mul_vec(&mat3_transpose(r_cw), &g_t);

    // Σ3 = R D Rᵀ with D = diag(exp(2·log_s))
    let n = quat_normalize(&g.rotation);
    let rot = quat_to_mat(&n);
    let d_diag = [
        (2.0 * g.log_scale[0]).exp(),
        (2.0 * g.log_scale[1]).exp(),
        (2.0 * g.log_scale[2]).exp(),
    ];
    // G_R = (G_Σ3 + G_Σ3ᵀ) R D
    let mut g_sym3 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g_sym3[i][j] = g_sigma3[i][j] + g_sigma3[j][i];
        }
    }
    let mut g_r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += g_sym3[i][k] * rot[k][j];
            }
            g_r[i][j] = s * d_diag[j];
        }
    }
    // d log_s_i = (Rᵀ G_Σ3 R)_ii · 2 D_ii
    let rt_g_r = mat3_mul(&mat3_mul(&mat3_transpose(&rot), &g_sigma3), &rot);
    let d_log_scale = [
        rt_g_r[0][0] * 2.0 * d_diag[0],
        rt_g_r[1][1] * 2.0 * d_diag[1],
        rt_g_r[2][2] * 2.0 * d_diag[2],
    ];

    // quaternion chain through the normalization
    let jacs = quat_to_mat_jacobian(&n);
    let mut d_n = [0.0; 4];
    for c in 0..4 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g_r[i][j] * jacs[c][i][j];
            }
        }
        d_n[c] = s;
    }
    let qn = quat_norm(&g.rotation);
    let mut d_rot = [0.0; 4];
    let ndot = d_n[0] * n[0] + d_n[1] * n[1] + d_n[2] * n[2] + d_n[3] * n[3];
    for c in 0..4 {
        d_rot[c] = (d_n[c] - n[c] * ndot) / qn;
    }

    (d_pos, d_rot, d_log_scale)
}

/// Per-render screen-space gradient statistics, accumulated across backward
/// passes for adaptive density control.
#[derive(Debug, Clone, Default)]
pub struct RenderStats {
    pub grad_norm_sum: Vec<f64>,
    pub passes: u64,
}

impl RenderStats {
    pub fn new(n: usize) -> Self {
        RenderStats {
            grad_norm_sum: vec![0.0; n],
            passes: 0,
        }
    }

    pub fn accumulate(&mut self, norms: &[f64]) {
        if self.grad_norm_sum.len() != norms.len() {
            self.grad_norm_sum = vec![0.0; norms.len()];
            self.passes = 0;
        }
        for (s, n) in self.grad_norm_sum.iter_mut().zip(norms) {
            *s += n;
        }
        self.passes += 1;
    }

    pub fn mean_norms(&self) -> Vec<f64> {
        let d = (self.passes.max(1)) as f64;
        self.grad_norm_sum.iter().map(|s| s / d).collect()
    }
}

struct RasterizeNode {
    cam: Camera,
    background: Vec3,
    n: usize,
    stats: Option<Rc<RefCell<RenderStats>>>,
}

fn gaussians_from_slices(n: usize, inputs: &[&[f64]]) -> Vec<Gaussian3D> {
    let (pos, rot, ls, op, col) = (inputs[0], inputs[1], inputs[2], inputs[3], inputs[4]);
    (0..n)
        .map(|i| Gaussian3D {
            position: [pos[i * 3], pos[i * 3 + 1], pos[i * 3 + 2]],
            rotation: [rot[i * 4], rot[i * 4 + 1], rot[i * 4 + 2], rot[i * 4 + 3]],
            log_scale: [ls[i * 3], ls[i * 3 + 1], ls[i * 3 + 2]],
            opacity_logit: op[i],
            color: [col[i * 3], col[i * 3 + 1], col[i * 3 + 2]],
        })
        .collect()
}

impl CustomOp for RasterizeNode {
    fn name(&self) -> &'static str {
        "rasterize"
    }

    fn backward(&self, inputs: &[&[f64]], out_grad: &[f64], input_grads: &mut [Vec<f64>]) {
        let gaussians = gaussians_from_slices(self.n, inputs);
        let grads = rasterize_backward(&gaussians, &self.cam, &self.background, out_grad);
        for i in 0..self.n {
            for k in 0..3 {
                input_grads[0][i * 3 + k] += grads.d_position[i][k];
                input_grads[2][i * 3 + k] += grads.d_log_scale[i][k];
                input_grads[4][i * 3 + k] += grads.d_color[i][k];
            }
            for k in 0..4 {
                input_grads[1][i * 4 + k] += grads.d_rotation[i][k];
            }
            input_grads[3][i] += grads.d_opacity_logit[i];
        }
        if let Some(stats) = &self.stats {
            stats.borrow_mut().accumulate(&grads.mean2d_grad_norm);
        }
    }
}

/// Render on the tape: one fused node whose inputs are the five per-Gaussian
/// parameter blocks `[n×3 positions, n×4 rotations, n×3 log-scales,
/// n opacity logits, n×3 colors]` and whose output is the H×W×3 image.
#[allow(clippy::too_many_arguments)]
pub fn render_on_tape(
    tape: &mut Tape,
    cam: &Camera,
    background: &Vec3,
    positions: Var,
    rotations: Var,
    log_scales: Var,
    opacity_logits: Var,
    colors: Var,
    stats: Option<Rc<RefCell<RenderStats>>>,
) -> Var {
    let n = tape.value(positions).len() / 3;
    let inputs = [positions, rotations, log_scales, opacity_logits, colors];
    let values: Vec<&[f64]> = inputs.iter().map(|v| tape.value(*v)).collect();
    let gaussians = gaussians_from_slices(n, &values);
    let img = super::raster::rasterize(&gaussians, cam, background);
    tape.custom(
        &inputs,
        img.data,
        vec![cam.height, cam.width, 3],
        Box::new(RasterizeNode {
            cam: cam.clone(),
            background: *background,
            n,
            stats,
        }),
    )
}
