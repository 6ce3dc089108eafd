//! Image quality metrics over linear RGB in `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math;
use crate::render::Image;

/// PSNR in dB with peak 1. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let mut se = 0.0f64;
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..3 {
            let d = p[c] as f64 - q[c] as f64;
            se += d * d;
        }
    }
    let mse = se / (3 * a.pixels.len()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * math::log10(mse))
}

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(invalid(format!("image sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    if a.pixels.is_empty() {
        return Err(invalid("empty image"));
    }
    Ok(())
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let mid = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - mid;
        *v = math::exp(-x * x / (2.0 * SIGMA * SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

// Separable valid-mode filtering.
fn filter(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let row = &src[y * w + x..y * w + x + WINDOW];
            tmp[y * ow + x] = row.iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += tmp[(y + i) * ow + x] * kv;
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), computed per channel
/// and averaged. Both sides must be at least 11 pixels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < WINDOW || h < WINDOW {
        return Err(invalid(format!("SSIM needs images of at least {WINDOW}x{WINDOW}, got {w}x{h}")));
    }
    let k = gaussian_window();
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.pixels.iter().map(|p| p[c] as f64).collect();
        let y: Vec<f64> = b.pixels.iter().map(|p| p[c] as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter(&x, w, h, &k);
        let my = filter(&y, w, h, &k);
        let sxx = filter(&xx, w, h, &k);
        let syy = filter(&yy, w, h, &k);
        let sxy = filter(&xy, w, h, &k);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + C1) * (2.0 * cov + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / 3.0)
}

/// Quality of one rendered frame against its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compare(pred: &Image, gt: &Image) -> Result<Self> {
        Ok(MetricReport { psnr: psnr(pred, gt)?, ssim: ssim(pred, gt)? })
    }

    /// Mean over reports; infinite PSNRs stay infinite.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(MetricReport {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_pixels(w, h, (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap()
    }

    #[test]
    fn psnr_known_values() {
        let a = Image::filled(4, 4, [0.5; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::filled(4, 4, [0.6; 3]);
        // mse = 0.01 -> 20 dB (up to f32 rounding of the pixels)
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let c = Image::filled(3, 4, [0.5; 3]);
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn ssim_identity_and_bounds() {
        let a = noise(24, 20, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = noise(24, 20, 2);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.5 && s > -1.0);
        assert!(ssim(&Image::filled(10, 30, [0.0; 3]), &Image::filled(10, 30, [0.0; 3])).is_err());
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let a = noise(13, 12, 3);
        let b = noise(13, 12, 4);
        let k = gaussian_window();
        let (w, h) = (13usize, 12usize);
        let mut total = 0.0;
        for c in 0..3 {
            let mut sum = 0.0;
            let mut count = 0;
            for oy in 0..=h - WINDOW {
                for ox in 0..=w - WINDOW {
                    let (mut ux, mut uy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..WINDOW {
                        for i in 0..WINDOW {
                            let g = k[i] * k[j];
                            let x = a.get((ox + i) as u32, (oy + j) as u32)[c] as f64;
                            let y = b.get((ox + i) as u32, (oy + j) as u32)[c] as f64;
                            ux += g * x;
                            uy += g * y;
                            sxx += g * x * x;
                            syy += g * y * y;
                            sxy += g * x * y;
                        }
                    }
                    let (vx, vy, cv) = (sxx - ux * ux, syy - uy * uy, sxy - ux * uy);
                    sum += ((2.0 * ux * uy + C1) * (2.0 * cv + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
                    count += 1;
                }
            }
            total += sum / count as f64;
        }
        assert!((ssim(&a, &b).unwrap() - total / 3.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = noise(16, 16, 9);
        let mut last = f64::INFINITY;
        for amp in [0.01f32, 0.05, 0.1, 0.3] {
            let b = Image::from_pixels(16, 16, a.pixels.iter().map(|p| p.map(|v| (v + amp).min(1.0))).collect()).unwrap();
            let p = psnr(&a, &b).unwrap();
            assert!(p < last);
            last = p;
        }
    }
}
