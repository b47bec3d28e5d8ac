//! Image-quality metrics: PSNR, SSIM (Gaussian-windowed), and MAE.

use crate::error::{Error, Result};
use crate::img::Image;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct ImageMetrics {
    /// Peak signal-to-noise ratio in dB against peak 1.0; infinite for
    /// identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
}

fn check_shapes<S>(a: &Image<S>, b: &Image<S>) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(Error::shape(format!(
            "metric inputs disagree: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    if a.data.is_empty() {
        return Err(Error::invalid("metric inputs are empty"));
    }
    Ok(())
}

pub fn mae<S: Real>(pred: &Image<S>, gt: &Image<S>) -> Result<f64> {
    check_shapes(pred, gt)?;
    Ok(pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(a, b)| (a.to_f64_() - b.to_f64_()).abs())
        .sum::<f64>()
        / pred.data.len() as f64)
}

pub fn psnr<S: Real>(pred: &Image<S>, gt: &Image<S>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let mse = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(a, b)| {
            let d = a.to_f64_() - b.to_f64_();
            d * d
        })
        .sum::<f64>()
        / pred.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size - 1) as f64 / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - c;
            let x = (i % size) as f64 - c;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1. Channels are averaged; images
/// smaller than the window use one window covering the whole image.
pub fn ssim<S: Real>(pred: &Image<S>, gt: &Image<S>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (w, h, ch) = (pred.width, pred.height, pred.channels);
    let win = 11usize.min(w).min(h);
    let kernel = gaussian_window(win, 1.5);
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..ch {
        for row in 0..=(h - win) {
            for col in 0..=(w - win) {
                let mut mu_x = 0.0;
                let mut mu_y = 0.0;
                for wy in 0..win {
                    for wx in 0..win {
                        let g = kernel[wy * win + wx];
                        mu_x += g * pred.pixel(row + wy, col + wx)[k].to_f64_();
                        mu_y += g * gt.pixel(row + wy, col + wx)[k].to_f64_();
                    }
                }
                let mut var_x = 0.0;
                let mut var_y = 0.0;
                let mut cov = 0.0;
                for wy in 0..win {
                    for wx in 0..win {
                        let g = kernel[wy * win + wx];
                        let dx = pred.pixel(row + wy, col + wx)[k].to_f64_() - mu_x;
                        let dy = gt.pixel(row + wy, col + wx)[k].to_f64_() - mu_y;
                        var_x += g * dx * dx;
                        var_y += g * dy * dy;
                        cov += g * dx * dy;
                    }
                }
                total += ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                    / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

pub fn image_metrics<S: Real>(pred: &Image<S>, gt: &Image<S>) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        mae: mae(pred, gt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(w, h, 3);
        for v in &mut img.data {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn identical_images_are_perfect() {
        let img = random_image(16, 16, 1);
        let m = image_metrics(&img, &img).unwrap();
        assert!(m.psnr.is_infinite());
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.mae, 0.0);
    }

    #[test]
    fn uniform_offset_has_closed_form_psnr_and_mae() {
        let img = random_image(16, 16, 2);
        let mut shifted = img.clone();
        let d = 10.0 / 255.0;
        for v in &mut shifted.data {
            *v += d; // allowed to exceed 1; metrics are on raw floats
        }
        let m_val = mae(&img, &shifted).unwrap();
        assert!((m_val - d).abs() < 1e-12);
        let p = psnr(&img, &shifted).unwrap();
        let expect = 20.0 * (255.0f64 / 10.0).log10();
        assert!((p - expect).abs() < 1e-9, "{p} vs {expect}");
    }

    #[test]
    fn inverted_zero_mean_patch_has_negative_ssim() {
        // zero-mean structured patch in [0,1] around 0.5: mu terms cancel
        // structure inversion; SSIM must go strongly negative
        let mut img = Image::<f64>::new(11, 11, 1);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = 0.5 + 0.4 * if (i / 11 + i % 11) % 2 == 0 { 1.0 } else { -1.0 };
        }
        let mut inv = img.clone();
        for v in &mut inv.data {
            *v = 1.0 - *v;
        }
        let s = ssim(&img, &inv).unwrap();
        assert!(s < -0.5, "ssim {s}");
    }

    #[test]
    fn matches_brute_force_on_small_images() {
        // direct re-evaluation of the formulas on an 8x8 image (single
        // 8x8 window)
        let a = random_image(8, 8, 7);
        let b = random_image(8, 8, 8);
        let m = image_metrics(&a, &b).unwrap();
        let n = a.data.len() as f64;
        let mae_bf: f64 = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n;
        assert_eq!(m.mae, mae_bf);
        let mse: f64 = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        assert!((m.psnr - (-10.0 * mse.log10())).abs() < 1e-12);
        // ssim brute force with the same 8x8 gaussian window
        let kernel = super::gaussian_window(8, 1.5);
        let mut per_channel = 0.0;
        for k in 0..3 {
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            for i in 0..64 {
                let (r, c) = (i / 8, i % 8);
                mu_x += kernel[i] * a.pixel(r, c)[k];
                mu_y += kernel[i] * b.pixel(r, c)[k];
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..64 {
                let (r, c) = (i / 8, i % 8);
                let dx = a.pixel(r, c)[k] - mu_x;
                let dy = b.pixel(r, c)[k] - mu_y;
                vx += kernel[i] * dx * dx;
                vy += kernel[i] * dy * dy;
                cov += kernel[i] * dx * dy;
            }
            let c1 = 0.0001;
            let c2 = 0.0009;
            per_channel += ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                / ((mu_x * mu_x + mu_y * mu_y + c1) * (vx + vy + c2));
        }
        assert!((m.ssim - per_channel / 3.0).abs() < 1e-12);
    }

    #[test]
    fn resolution_mismatch_is_rejected() {
        let a = random_image(8, 8, 1);
        let b = random_image(9, 8, 1);
        assert!(image_metrics(&a, &b).is_err());
    }
}
