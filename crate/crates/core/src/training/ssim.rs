//! SSIM with an 11×11 Gaussian window (σ = 1.5, K1 = 0.01, K2 = 0.03,
//! peak 1.0), evaluated at valid window positions and averaged over
//! positions and channels. Includes the analytic gradient used by the
//! D-SSIM loss node.

use super::TrainError;
use crate::gsplat::Image;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

pub fn c1() -> f64 {
    (K1 * 1.0) * (K1 * 1.0)
}

pub fn c2() -> f64 {
    (K2 * 1.0) * (K2 * 1.0)
}

/// Normalized 1-D Gaussian taps; the 2-D window is the outer product.
pub fn kernel_1d() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, slot) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *slot = (-0.5 * d * d / (SIGMA * SIGMA)).exp();
        sum += *slot;
    }
    for slot in k.iter_mut() {
        *slot /= sum;
    }
    k
}

fn check_dims(a: &Image, b: &Image) -> Result<(usize, usize), TrainError> {
    if a.width != b.width || a.height != b.height {
        return Err(TrainError::Contract {
            what: format!(
                "image dimensions differ: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            ),
        });
    }
    if a.width < WINDOW || a.height < WINDOW {
        return Err(TrainError::Contract {
            what: format!(
                "images must be at least {WINDOW}x{WINDOW} for SSIM, got {}x{}",
                a.width, a.height
            ),
        });
    }
    Ok((a.width, a.height))
}

/// Valid-mode separable windowed sum of one channel plane (w×h in, the
/// output is (w−10)×(h−10)).
fn windowed(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = kernel_1d();
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    // rows pass
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // cols pass
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn channel_plane(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).cloned().collect()
}

struct ChannelMaps {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    m2x: Vec<f64>,
    m2y: Vec<f64>,
    mxy: Vec<f64>,
}

fn channel_maps(xa: &[f64], xb: &[f64], w: usize, h: usize) -> ChannelMaps {
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
    let prod: Vec<f64> = xa.iter().zip(xb).map(|(x, y)| x * y).collect();
    ChannelMaps {
        mu_x: windowed(xa, w, h),
        mu_y: windowed(xb, w, h),
        m2x: windowed(&sq(xa), w, h),
        m2y: windowed(&sq(xb), w, h),
        mxy: windowed(&prod, w, h),
    }
}

/// Mean SSIM over valid positions and the three channels.
pub fn ssim_mean(a: &Image, b: &Image) -> Result<f64, TrainError> {
    let (w, h) = check_dims(a, b)?;
    let (c1v, c2v) = (c1(), c2());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let xa = channel_plane(a, c);
        let xb = channel_plane(b, c);
        let maps = channel_maps(&xa, &xb, w, h);
        for i in 0..maps.mu_x.len() {
            let (mx, my) = (maps.mu_x[i], maps.mu_y[i]);
            let vx = maps.m2x[i] - mx * mx;
            let vy = maps.m2y[i] - my * my;
            let cov = maps.mxy[i] - mx * my;
            let n1 = 2.0 * mx * my + c1v;
            let n2 = 2.0 * cov + c2v;
            let d1 = mx * mx + my * my + c1v;
            let d2 = vx + vy + c2v;
            total += (n1 * n2) / (d1 * d2);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean SSIM plus gradients of `upstream · ssim_mean` w.r.t. both images.
pub fn ssim_mean_with_grad(
    a: &Image,
    b: &Image,
    upstream: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let (w, h) = check_dims(a, b)?;
    let (c1v, c2v) = (c1(), c2());
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let k = kernel_1d();
    let n_positions = (ow * oh * 3) as f64;
    let scale = upstream / n_positions;

    let mut grad_a = vec![0.0; a.data.len()];
    let mut grad_b = vec![0.0; b.data.len()];
    let mut total = 0.0;

    for c in 0..3 {
        let xa = channel_plane(a, c);
        let xb = channel_plane(b, c);
        let maps = channel_maps(&xa, &xb, w, h);

        // pointwise partials w.r.t. the five moment maps
        let n = maps.mu_x.len();
        let mut d_mu_x = vec![0.0; n];
        let mut d_mu_y = vec![0.0; n];
        let mut d_m2x = vec![0.0; n];
        let mut d_m2y = vec![0.0; n];
        let mut d_mxy = vec![0.0; n];
        for i in 0..n {
            let (mx, my) = (maps.mu_x[i], maps.mu_y[i]);
            let vx = maps.m2x[i] - mx * mx;
            let vy = maps.m2y[i] - my * my;
            let cov = maps.mxy[i] - mx * my;
            let n1 = 2.0 * mx * my + c1v;
            let n2 = 2.0 * cov + c2v;
            let d1 = mx * mx + my * my + c1v;
            let d2 = vx + vy + c2v;
            total += (n1 * n2) / (d1 * d2);

            let lum = n1 / d1;
            let con = n2 / d2;
            // ∂S/∂(variances, covariance): treat (μ, σ², σxy) first
            let ds_dvx = -lum * n2 / (d2 * d2);
            let ds_dvy = ds_dvx;
            let ds_dcov = lum * 2.0 / d2;
            let ds_dmx = con * (2.0 * my * d1 - n1 * 2.0 * mx) / (d1 * d1);
            let ds_dmy = con * (2.0 * mx * d1 - n1 * 2.0 * my) / (d1 * d1);
            // then chain into the raw moment maps: σx² = m2x − μx²,
            // σxy = mxy − μx μy
            d_m2x[i] = scale * ds_dvx;
            d_m2y[i] = scale * ds_dvy;
            d_mxy[i] = scale * ds_dcov;
            d_mu_x[i] = scale * (ds_dmx - 2.0 * mx * ds_dvx - my * ds_dcov);
            d_mu_y[i] = scale * (ds_dmy - 2.0 * my * ds_dvy - mx * ds_dcov);
        }

        // adjoint of the valid windowed sum: scatter each output-position
        // gradient across its patch. dL/dx(q) picks up w(q−p)·[d_mu +
        // 2x(q)·d_m2 + y(q)·d_mxy] from every window p covering q.
        for py in 0..oh {
            for px in 0..ow {
                let i = py * ow + px;
                let gmux = d_mu_x[i];
                let gmuy = d_mu_y[i];
                let gm2x = d_m2x[i];
                let gm2y = d_m2y[i];
                let gmxy = d_mxy[i];
                if gmux == 0.0 && gmuy == 0.0 && gm2x == 0.0 && gm2y == 0.0 && gmxy == 0.0 {
                    continue;
                }
                for (ky, &wk_y) in k.iter().enumerate() {
                    let row = (py + ky) * w;
                    for (kx, &wk_x) in k.iter().enumerate() {
                        let q = row + px + kx;
                        let wk = wk_y * wk_x;
                        let (xv, yv) = (xa[q], xb[q]);
                        grad_a[q * 3 + c] += wk * (gmux + 2.0 * xv * gm2x + yv * gmxy);
                        grad_b[q * 3 + c] += wk * (gmuy + 2.0 * yv * gm2y + xv * gmxy);
                    }
                }
            }
        }
    }
    Ok((total / n_positions, grad_a, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn random_image(rng: &mut Rng, w: usize, h: usize) -> Image {
        Image::from_data(w, h, (0..w * h * 3).map(|_| rng.uniform()).collect())
    }

    #[test]
    fn identical_images_score_one() {
        let mut rng = Rng::seed_from(1);
        let img = random_image(&mut rng, 16, 16);
        let s = ssim_mean(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn constant_vs_inverted_matches_closed_form() {
        let black = Image::filled(16, 16, [0.0; 3]);
        let white = Image::filled(16, 16, [1.0; 3]);
        let s = ssim_mean(&black, &white).unwrap();
        // constant patches: σ terms vanish, S = C1/(1 + C1) exactly
        let expect = c1() / (1.0 + c1());
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
    }

    #[test]
    fn matches_naive_sliding_window_oracle() {
        let mut rng = Rng::seed_from(2);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let fast = ssim_mean(&a, &b).unwrap();
        let slow = naive_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
    }

    #[test]
    fn symmetry() {
        let mut rng = Rng::seed_from(3);
        let a = random_image(&mut rng, 18, 14);
        let b = random_image(&mut rng, 18, 14);
        let ab = ssim_mean(&a, &b).unwrap();
        let ba = ssim_mean(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn too_small_images_rejected() {
        let a = Image::filled(8, 8, [0.5; 3]);
        assert!(ssim_mean(&a, &a).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from(4);
        let a = random_image(&mut rng, 12, 12);
        let b = random_image(&mut rng, 12, 12);
        let (_, grad_a, grad_b) = ssim_mean_with_grad(&a, &b, 1.0).unwrap();
        let h = 1e-6;
        // spot-check a scattering of coordinates on both sides
        for idx in [0usize, 7, 55, 100, 200, 431] {
            let mut ap = a.clone();
            ap.data[idx] += h;
            let mut am = a.clone();
            am.data[idx] -= h;
            let num = (ssim_mean(&ap, &b).unwrap() - ssim_mean(&am, &b).unwrap()) / (2.0 * h);
            assert!(
                (num - grad_a[idx]).abs() < 1e-8,
                "grad_a[{idx}]: {num} vs {}",
                grad_a[idx]
            );
            let mut bp = b.clone();
            bp.data[idx] += h;
            let mut bm = b.clone();
            bm.data[idx] -= h;
            let num = (ssim_mean(&a, &bp).unwrap() - ssim_mean(&a, &bm).unwrap()) / (2.0 * h);
            assert!(
                (num - grad_b[idx]).abs() < 1e-8,
                "grad_b[{idx}]: {num} vs {}",
                grad_b[idx]
            );
        }
    }

    // direct per-window weighted moments, no separable trick
    fn naive_ssim(a: &Image, b: &Image) -> f64 {
        let k = kernel_1d();
        let (w, h) = (a.width, a.height);
        let mut total = 0.0;
        let mut count = 0;
        for c in 0..3 {
            for py in 0..=(h - WINDOW) {
                for px in 0..=(w - WINDOW) {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    let mut m2x = 0.0;
                    let mut m2y = 0.0;
                    let mut mxy = 0.0;
                    for ky in 0..WINDOW {
                        for kx in 0..WINDOW {
                            let wk = k[ky] * k[kx];
                            let xv = a.pixel(px + kx, py + ky)[c];
                            let yv = b.pixel(px + kx, py + ky)[c];
                            mx += wk * xv;
                            my += wk * yv;
                            m2x += wk * xv * xv;
                            m2y += wk * yv * yv;
                            mxy += wk * xv * yv;
                        }
                    }
                    let vx = m2x - mx * mx;
                    let vy = m2y - my * my;
                    let cov = mxy - mx * my;
                    let s = ((2.0 * mx * my + c1()) * (2.0 * cov + c2()))
                        / ((mx * mx + my * my + c1()) * (vx + vy + c2()));
                    total += s;
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}
