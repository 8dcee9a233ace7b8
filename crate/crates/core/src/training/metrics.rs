//! Image and motion evaluation metrics.

use super::ssim::ssim_mean;
use super::TrainError;
use crate::gsplat::Image;
use crate::motiongen::{MotionGroup, MotionSeq};

fn check_image_dims(a: &Image, b: &Image) -> Result<(), TrainError> {
    if a.width != b.width || a.height != b.height {
        return Err(TrainError::Contract {
            what: format!(
                "image dimensions differ: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            ),
        });
    }
    Ok(())
}

pub fn metric_l1(a: &Image, b: &Image) -> Result<f64, TrainError> {
    check_image_dims(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

pub fn metric_mse_images(a: &Image, b: &Image) -> Result<f64, TrainError> {
    check_image_dims(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR in dB with peak 1.0; identical inputs give the +∞ sentinel.
pub fn metric_psnr(a: &Image, b: &Image) -> Result<f64, TrainError> {
    let mse = metric_mse_images(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub fn metric_ssim(a: &Image, b: &Image) -> Result<f64, TrainError> {
    ssim_mean(a, b)
}

/// Mean squared error over one motion parameter group, across all frames of
/// all paired clips.
pub fn metric_mse_motion(
    pred: &[&MotionSeq],
    gt: &[&MotionSeq],
    group: MotionGroup,
) -> Result<f64, TrainError> {
    if pred.len() != gt.len() {
        return Err(TrainError::Contract {
            what: format!("clip counts differ: {} vs {}", pred.len(), gt.len()),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        if p.len != g.len || p.params() != g.params() {
            return Err(TrainError::Contract {
                what: format!(
                    "clip shapes differ: {}x{} vs {}x{}",
                    p.len,
                    p.params(),
                    g.len,
                    g.params()
                ),
            });
        }
        let range = p.group_range(group);
        for t in 0..p.len {
            for (x, y) in p.frame(t)[range.clone()]
                .iter()
                .zip(&g.frame(t)[range.clone()])
            {
                total += (x - y) * (x - y);
                count += 1;
            }
        }
    }
    Ok(total / count.max(1) as f64)
}
