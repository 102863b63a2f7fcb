//! Photometric loss (L1 + D-SSIM) and evaluation metrics.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

const WINDOW_RADIUS: usize = 5;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
pub const PSNR_CAP_DB: f64 = 100.0;

/// Components of the training loss. `total = (1 − lambda)·l1 + lambda·dssim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l1: f64,
    pub dssim: f64,
    pub total: f64,
    pub lambda: f64,
}

fn check_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

/// Mean absolute difference and its gradient with respect to `a`.
pub fn l1_loss(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_dims(a, b)?;
    let n = a.pixels.len() as f64;
    let mut sum = 0.0;
    let grad = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| {
            let d = x - y;
            sum += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum / n, grad))
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(mse_loss(a, b)?.0)
}

/// Mean squared difference and its gradient with respect to `a`.
pub fn mse_loss(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_dims(a, b)?;
    let n = a.pixels.len() as f64;
    let s: f64 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y) * (x - y)).sum();
    let grad = a.pixels.iter().zip(&b.pixels).map(|(x, y)| 2.0 * (x - y) / n).collect();
    Ok((s / n, grad))
}

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP_DB`] when MSE < 1e-10.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        Ok(PSNR_CAP_DB)
    } else {
        Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
    }
}

fn window() -> [f64; 2 * WINDOW_RADIUS + 1] {
    let mut w = [0.0; 2 * WINDOW_RADIUS + 1];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - WINDOW_RADIUS as f64;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mirror index without repeating the edge sample (`-1 → 1`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Separable Gaussian blur of a single-channel plane with reflection.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * src[y * w + reflect(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                s += kv * tmp[reflect(y as isize + j as isize - r, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Adjoint of [`blur`]: scatters instead of gathers.
fn blur_adjoint(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = WINDOW_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = src[y * w + x];
            for (j, kv) in k.iter().enumerate() {
                tmp[reflect(y as isize + j as isize - r, h) * w + x] += kv * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = tmp[y * w + x];
            for (j, kv) in k.iter().enumerate() {
                out[y * w + reflect(x as isize + j as isize - r, w)] += kv * v;
            }
        }
    }
    out
}

fn channel(img: &ImageBuffer, ch: usize) -> Vec<f64> {
    img.pixels.iter().skip(ch).step_by(3).copied().collect()
}

/// Mean SSIM over pixels and channels, and its gradient with respect to `a`.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    let n = w * h;
    let k = window();
    let mut total = 0.0;
    let mut grad = vec![0.0; 3 * n];
    let norm = 1.0 / (3 * n) as f64;
    for ch in 0..3 {
        let pa = channel(a, ch);
        let pb = channel(b, ch);
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = blur(&pa, w, h, &k);
        let mu_b = blur(&pb, w, h, &k);
        let e_aa = blur(&sq(&pa, &pa), w, h, &k);
        let e_bb = blur(&sq(&pb, &pb), w, h, &k);
        let e_ab = blur(&sq(&pa, &pb), w, h, &k);
        let mut g_mu = vec![0.0; n];
        let mut g_aa = vec![0.0; n];
        let mut g_ab = vec![0.0; n];
        for p in 0..n {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let var_a = e_aa[p] - ma * ma;
            let var_b = e_bb[p] - mb * mb;
            let cov = e_ab[p] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = var_a + var_b + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // S as a function of (μa, E[a²], E[ab]).
            let d_eaa = -s / b2;
            let d_eab = 2.0 * a1 / (b1 * b2);
            let d_mu = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1 - 2.0 * ma * d_eaa - mb * d_eab;
            g_mu[p] = d_mu * norm;
            g_aa[p] = d_eaa * norm;
            g_ab[p] = d_eab * norm;
        }
        let t_mu = blur_adjoint(&g_mu, w, h, &k);
        let t_aa = blur_adjoint(&g_aa, w, h, &k);
        let t_ab = blur_adjoint(&g_ab, w, h, &k);
        for p in 0..n {
            grad[3 * p + ch] = t_mu[p] + 2.0 * pa[p] * t_aa[p] + pb[p] * t_ab[p];
        }
    }
    Ok((total * norm, grad))
}

/// `(1 − lambda)·L1 + lambda·(1 − SSIM)` and its gradient with respect to
/// `rendered`.
pub fn photometric_loss(
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    lambda: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (l1, g1) = l1_loss(rendered, target)?;
    let (s, gs) = if lambda > 0.0 {
        ssim(rendered, target)?
    } else {
        (1.0, vec![0.0; rendered.pixels.len()])
    };
    let dssim = 1.0 - s;
    let grad = g1
        .iter()
        .zip(&gs)
        .map(|(a, b)| (1.0 - lambda) * a - lambda * b)
        .collect();
    Ok((
        LossBreakdown {
            l1,
            dssim,
            total: (1.0 - lambda) * l1 + lambda * dssim,
            lambda,
        },
        grad,
    ))
}
