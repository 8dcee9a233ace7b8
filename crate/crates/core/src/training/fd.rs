//! Fréchet distance between Gaussian fits of motion-feature distributions.

use super::TrainError;
use crate::motiongen::{MotionGroup, MotionSeq};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns).
pub fn sym_eig(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| m[i * n + i]).collect();
    (eigvals, v)
}

fn matmul_sq(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    crate::numcore::matmul_raw(a, b, n, n, n)
}

/// Symmetric PSD square root via eigendecomposition; negative rounding
/// noise is clamped at zero.
fn sqrtm_psd(a: &[f64], n: usize) -> Vec<f64> {
    let (vals, vecs) = sym_eig(a, n);
    let mut scaled = vec![0.0; n * n];
    for i in 0..n {
        let s = vals[i].max(0.0).sqrt();
        for r in 0..n {
            scaled[r * n + i] = vecs[r * n + i] * s;
        }
    }
    // V·diag(√λ)·Vᵀ
    let mut vt = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            vt[r * n + c] = vecs[c * n + r];
        }
    }
    matmul_sq(&scaled, &vt, n)
}

/// Mean and (unbiased) covariance of row vectors.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let n = rows.len();
    if n < 2 {
        return Err(TrainError::Contract {
            what: format!("need at least 2 frames to fit a Gaussian, got {n}"),
        });
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= (n - 1) as f64;
    }
    Ok((mean, cov))
}

/// Squared Fréchet distance between two Gaussians:
/// ‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2}).
pub fn frechet_distance_sq(
    mu1: &[f64],
    cov1: &[f64],
    mu2: &[f64],
    cov2: &[f64],
) -> Result<f64, TrainError> {
    let d = mu1.len();
    if mu2.len() != d || cov1.len() != d * d || cov2.len() != d * d {
        return Err(TrainError::Contract {
            what: "Fréchet distance requires matched dimensions".into(),
        });
    }
    let regularize = |cov: &[f64]| -> Vec<f64> {
        let (vals, _) = sym_eig(cov, d);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < 1e-12 {
            eprintln!(
                "warning: near-singular covariance (min eigenvalue {min:.3e}), regularizing with 1e-9·I"
            );
            let mut c = cov.to_vec();
            for i in 0..d {
                c[i * d + i] += 1e-9;
            }
            c
        } else {
            cov.to_vec()
        }
    };
    let c1 = regularize(cov1);
    let c2 = regularize(cov2);

    let mean_term: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b) * (a - b)).sum();
    let trace = |m: &[f64]| -> f64 { (0..d).map(|i| m[i * d + i]).sum() };

    // tr((Σ₁Σ₂)^{1/2}) computed symmetrically: √Σ₂ · Σ₁ · √Σ₂ is PSD
    let s2 = sqrtm_psd(&c2, d);
    let inner = matmul_sq(&matmul_sq(&s2, &c1, d), &s2, d);
    let (vals, _) = sym_eig(&inner, d);
    let cross: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();

    Ok(mean_term + trace(&c1) + trace(&c2) - 2.0 * cross)
}

fn group_rows(seqs: &[&MotionSeq], group: MotionGroup) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for seq in seqs {
        let range = seq.group_range(group);
        for t in 0..seq.len {
            rows.push(seq.frame(t)[range.clone()].to_vec());
        }
    }
    rows
}

/// FD² between the per-frame group-vector distributions of two clip sets.
pub fn metric_fd(
    pred: &[&MotionSeq],
    gt: &[&MotionSeq],
    group: MotionGroup,
) -> Result<f64, TrainError> {
    let a = group_rows(pred, group);
    let b = group_rows(gt, group);
    let (mu1, c1) = fit_gaussian(&a)?;
    let (mu2, c2) = fit_gaussian(&b)?;
    frechet_distance_sq(&mu1, &c1, &mu2, &c2)
}

/// Paired FD²: per-frame group vectors concatenated with the paired
/// interlocutor's, capturing joint dyadic statistics. `partners` must align
/// one-to-one with the clips; partner frames are resampled to clip length.
pub fn metric_pfd(
    pred: &[&MotionSeq],
    gt: &[&MotionSeq],
    partners: &[&MotionSeq],
    group: MotionGroup,
) -> Result<f64, TrainError> {
    if pred.len() != partners.len() || gt.len() != partners.len() {
        return Err(TrainError::Contract {
            what: format!(
                "pairing mismatch: {} predictions, {} ground-truth, {} partners",
                pred.len(),
                gt.len(),
                partners.len()
            ),
        });
    }
    let dyadic = |seqs: &[&MotionSeq]| -> Result<Vec<Vec<f64>>, TrainError> {
        let mut rows = Vec::new();
        for (seq, partner) in seqs.iter().zip(partners) {
            let range = seq.group_range(group);
            let p_range = partner.group_range(group);
            let p_frames = partner.resample(seq.len)?;
            let p = partner.params();
            for t in 0..seq.len {
                let mut row = seq.frame(t)[range.clone()].to_vec();
                row.extend_from_slice(&p_frames[t * p..(t + 1) * p][p_range.clone()]);
                rows.push(row);
            }
        }
        Ok(rows)
    };
    let a = dyadic(pred)?;
    let b = dyadic(gt)?;
    let (mu1, c1) = fit_gaussian(&a)?;
    let (mu2, c2) = fit_gaussian(&b)?;
    frechet_distance_sq(&mu1, &c1, &mu2, &c2)
}
