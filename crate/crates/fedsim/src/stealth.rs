//! Trigger invisibility metrics: SSIM and PSNR.
//!
//! PSNR uses a hybrid convention kept for comparability with the frequency
//! triggers' analytic energy: the MSE is computed on pixels divided by 255
//! while the peak stays at 255, i.e. `PSNR = 10 log10(255² / MSE(a/255,
//! b/255))`. Under this convention an unclipped s×s, magnitude-m frequency
//! trigger on a 3×32×32 image scores `10 log10(255⁴ · 3072 / (s²m²))`
//! regardless of image content — e.g. 81.5933 dB for s=3, m=100.
//!
//! SSIM follows the canonical single-scale reference: 11×11 Gaussian window
//! (σ = 1.5), C1 = (0.01·255)², C2 = (0.03·255)², valid windows only,
//! averaged over windows and channels.

use thiserror::Error;

use crate::image::{ImageError, ImageTensor};

#[derive(Debug, Error, PartialEq)]
pub enum StealthError {
    #[error(transparent)]
    Shape(#[from] ImageError),
    #[error("image {h}x{w} smaller than the {win}x{win} SSIM window")]
    TooSmall { h: usize, w: usize, win: usize },
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 6.5025; // (0.01 * 255)^2
const C2: f64 = 58.5225; // (0.03 * 255)^2

/// Similarity report for one clean/poisoned pair.
///
/// `ssim == 1` and `psnr == +inf` exactly when the images are identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealthReport {
    pub ssim: f64,
    pub psnr: f64,
}

/// Peak signal-to-noise ratio in decibels; `+inf` for identical images.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64, StealthError> {
    a.check_same_shape(b)?;
    let n = a.as_slice().len() as f64;
    let mse: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = (x - y) / 255.0;
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Single-scale structural similarity, averaged over all valid windows of
/// all channels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64, StealthError> {
    a.check_same_shape(b)?;
    let (channels, h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(StealthError::TooSmall { h, w, win: SSIM_WINDOW });
    }
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..channels {
        let pa = a.plane(ch);
        let pb = b.plane(ch);
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut mu_a, mut mu_b) = (0.0, 0.0);
                let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
                for wy in 0..SSIM_WINDOW {
                    let row = (y0 + wy) * w + x0;
                    let ra = &pa[row..row + SSIM_WINDOW];
                    let rb = &pb[row..row + SSIM_WINDOW];
                    let rw = &win[wy * SSIM_WINDOW..(wy + 1) * SSIM_WINDOW];
                    for wx in 0..SSIM_WINDOW {
                        let wgt = rw[wx];
                        mu_a += wgt * ra[wx];
                        mu_b += wgt * rb[wx];
                        aa += wgt * ra[wx] * ra[wx];
                        bb += wgt * rb[wx] * rb[wx];
                        ab += wgt * ra[wx] * rb[wx];
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let s = ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                    / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
                total += s;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Both metrics for one image pair.
pub fn stealth_report(clean: &ImageTensor, poisoned: &ImageTensor) -> Result<StealthReport, StealthError> {
    Ok(StealthReport { ssim: ssim(clean, poisoned)?, psnr: psnr(clean, poisoned)? })
}
