use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_TAPS: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn image_metrics(a: &Image, b: &Image) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
    })
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// `10·log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.pixels().len() * 3;
    if n == 0 {
        return Ok(PSNR_CAP);
    }
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q).norm_squared())
        .sum();
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_taps() -> [f64; SSIM_TAPS] {
    let c = (SSIM_TAPS / 2) as f64;
    let mut w = [0.0; SSIM_TAPS];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering: output is `(w - 10) × (h - 10)`.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_TAPS]) -> Vec<f64> {
    let ow = w + 1 - SSIM_TAPS;
    let oh = h + 1 - SSIM_TAPS;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_TAPS).map(|k| taps[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_TAPS).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11-tap Gaussian window (σ = 1.5), `K1 = 0.01`,
/// `K2 = 0.03`, dynamic range 1, averaged over the three channels. Images
/// smaller than the window use a single window spanning the whole image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w * h == 0 {
        return Ok(1.0);
    }
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.pixels().iter().map(|p| p[ch]).collect();
        let y: Vec<f64> = b.pixels().iter().map(|p| p[ch]).collect();
        let (mx, my, sxx, syy, sxy) = if w >= SSIM_TAPS && h >= SSIM_TAPS {
            let taps = gaussian_taps();
            let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
            (
                filter(&x, w, h, &taps),
                filter(&y, w, h, &taps),
                filter(&prod(&x, &x), w, h, &taps),
                filter(&prod(&y, &y), w, h, &taps),
                filter(&prod(&x, &y), w, h, &taps),
            )
        } else {
            let n = (w * h) as f64;
            let mean = |p: &[f64]| p.iter().sum::<f64>() / n;
            let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).sum::<f64>() / n;
            (
                vec![mean(&x)],
                vec![mean(&y)],
                vec![dot(&x, &x)],
                vec![dot(&y, &y)],
                vec![dot(&x, &y)],
            )
        };
        let m = mx.len() as f64;
        let sum: f64 = (0..mx.len())
            .map(|i| {
                let (ux, uy) = (mx[i], my[i]);
                let vx = sxx[i] - ux * ux;
                let vy = syy[i] - uy * uy;
                let cxy = sxy[i] - ux * uy;
                ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
            })
            .sum();
        total += sum / m;
    }
    Ok(total / 3.0)
}
