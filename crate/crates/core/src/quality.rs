//! Full-reference image quality: PSNR over RGB and mean SSIM over luma.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::luma_plane;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const L: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScorePair {
    /// Decibels; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub mssim: f64,
}

fn same_shape(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

/// `10 log10(255² / MSE)` with the MSE pooled over all three channels.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.as_raw().len();
    if n == 0 {
        return Err(Error::NoData("empty image".into()));
    }
    let sse: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / n as f64;
    Ok(10.0 * (L * L / mse).log10())
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid separable correlation of a `w x h` plane.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Per-window SSIM map of two equally sized grey planes.
pub fn ssim_map(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<Vec<f64>> {
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    if a.len() != w * h || b.len() != w * h {
        return Err(Error::Shape("plane length does not match dimensions".into()));
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = ((SSIM_K1 * L).powi(2), (SSIM_K2 * L).powi(2));
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let (mu_a, _, _) = blur(a, w, h, &k);
    let (mu_b, _, _) = blur(b, w, h, &k);
    let (aa, _, _) = blur(&prod(&|x, _| x * x), w, h, &k);
    let (bb, _, _) = blur(&prod(&|_, y| y * y), w, h, &k);
    let (ab, _, _) = blur(&prod(&|x, y| x * y), w, h, &k);
    Ok((0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect())
}

/// Mean SSIM over every fully contained 11x11 Gaussian window of the luma
/// planes.
pub fn mssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let pa: Vec<f64> = luma_plane(a).into_iter().map(f64::from).collect();
    let pb: Vec<f64> = luma_plane(b).into_iter().map(f64::from).collect();
    let map = ssim_map(&pa, &pb, w, h)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

pub fn score(a: &RgbImage, b: &RgbImage) -> Result<QualityScorePair> {
    Ok(QualityScorePair {
        psnr: psnr(a, b)?,
        mssim: mssim(a, b)?,
    })
}
