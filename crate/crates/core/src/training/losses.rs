//! Training losses: motion L2, L1 + D-SSIM image loss, hinge-floor
//! regularizers on canonical positions and offsets, and their weighted sum.

use super::ssim::{ssim_mean, ssim_mean_with_grad};
use super::TrainError;
use crate::gsplat::Image;
use crate::numcore::{CustomOp, NumError, Tape, Var};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// D-SSIM share of the image loss.
    pub dssim_lambda: f64,
    /// Image-loss weight in the joint objective.
    pub lambda1: f64,
    /// Canonical-position regularizer weight.
    pub lambda2: f64,
    /// Offset regularizer weight.
    pub lambda3: f64,
    pub eps_pos: f64,
    pub eps_offset: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dssim_lambda: 0.2,
            lambda1: 0.5,
            lambda2: 0.01,
            lambda3: 0.01,
            eps_pos: 1.0,
            eps_offset: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        let all = [
            self.dssim_lambda,
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.eps_pos,
            self.eps_offset,
        ];
        if all.iter().any(|v| *v < 0.0) || !(0.0..=1.0).contains(&self.dssim_lambda) {
            return Err(TrainError::Config {
                what: format!("invalid loss weights {self:?}"),
            });
        }
        Ok(())
    }
}

/// ‖M − M_gt‖₂ normalized by √(frame count), so the magnitude does not grow
/// with clip length.
pub fn l_mesh(tape: &mut Tape, pred: Var, gt: Var) -> Result<Var, NumError> {
    let t = tape.shape(pred)[0];
    let d = tape.sub(pred, gt)?;
    let sq = tape.mul(d, d)?;
    let total = tape.sum(sq);
    let scaled = tape.scale(total, 1.0 / t as f64);
    Ok(tape.sqrt(scaled))
}

/// Plain-value D-SSIM, (1 − SSIM)/2.
pub fn dssim_value(a: &Image, b: &Image) -> Result<f64, TrainError> {
    Ok((1.0 - ssim_mean(a, b)?) / 2.0)
}

struct DssimNode {
    target: Image,
    width: usize,
    height: usize,
}

impl CustomOp for DssimNode {
    fn name(&self) -> &'static str {
        "dssim"
    }

    fn backward(&self, inputs: &[&[f64]], out_grad: &[f64], input_grads: &mut [Vec<f64>]) {
        let render = Image::from_data(self.width, self.height, inputs[0].to_vec());
        // d(dssim)/d(ssim) = −1/2
        let (_, grad_render, _) = ssim_mean_with_grad(&render, &self.target, -0.5 * out_grad[0])
            .expect("forward validated dimensions");
        for (g, s) in input_grads[0].iter_mut().zip(&grad_render) {
            *g += s;
        }
    }
}

/// D-SSIM between a rendered image on the tape and a fixed target.
pub fn dssim_on_tape(tape: &mut Tape, render: Var, target: &Image) -> Result<Var, TrainError> {
    let shape = tape.shape(render).to_vec();
    if shape.len() != 3 || shape[2] != 3 || shape[0] != target.height || shape[1] != target.width {
        return Err(TrainError::Contract {
            what: format!(
                "render shape {shape:?} does not match target {}x{}",
                target.width, target.height
            ),
        });
    }
    let render_img = Image::from_data(target.width, target.height, tape.value(render).to_vec());
    let value = dssim_value(&render_img, target)?;
    Ok(tape.custom(
        &[render],
        vec![value],
        vec![1],
        Box::new(DssimNode {
            target: target.clone(),
            width: target.width,
            height: target.height,
        }),
    ))
}

/// (1 − λ)·L1 + λ·D-SSIM against a fixed ground-truth image.
pub fn l_image(
    tape: &mut Tape,
    render: Var,
    gt: &Image,
    weights: &LossWeights,
) -> Result<Var, TrainError> {
    let gt_var = tape.constant(gt.data.clone(), vec![gt.height, gt.width, 3]);
    let diff = tape.sub(render, gt_var).map_err(TrainError::from)?;
    let l1 = tape.abs(diff);
    let l1 = tape.mean(l1);
    let dssim = dssim_on_tape(tape, render, gt)?;
    let a = tape.scale(l1, 1.0 - weights.dssim_lambda);
    let b = tape.scale(dssim, weights.dssim_lambda);
    tape.add(a, b).map_err(TrainError::from)
}

/// ‖max(|x|, ε)‖₂: a hinge floor — entries inside the band contribute the
/// constant ε and no gradient.
fn hinge_floor_norm(tape: &mut Tape, x: Var, eps: f64) -> Var {
    let a = tape.abs(x);
    let floored = tape.max_const(a, eps);
    let sq = tape.mul(floored, floored).expect("same node");
    let total = tape.sum(sq);
    tape.sqrt(total)
}

/// Keeps canonical positions near their facets.
pub fn l_pos(tape: &mut Tape, mu_c: Var, eps_pos: f64) -> Var {
    hinge_floor_norm(tape, mu_c, eps_pos)
}

/// Restrains offset-correction magnitudes.
pub fn l_offset(tape: &mut Tape, offsets: Var, eps_offset: f64) -> Var {
    hinge_floor_norm(tape, offsets, eps_offset)
}

/// L_mesh + λ₁·L_image + λ₂·L_pos + λ₃·L_offset.
pub fn l_joint(
    tape: &mut Tape,
    mesh_term: Var,
    image_term: Var,
    pos_term: Var,
    offset_term: Var,
    weights: &LossWeights,
) -> Result<Var, NumError> {
    let i = tape.scale(image_term, weights.lambda1);
    let p = tape.scale(pos_term, weights.lambda2);
    let o = tape.scale(offset_term, weights.lambda3);
    let mi = tape.add(mesh_term, i)?;
    let mip = tape.add(mi, p)?;
    tape.add(mip, o)
}
