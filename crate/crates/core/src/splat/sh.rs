//! Real spherical-harmonics basis up to degree 3 and view-dependent color.

use super::{MAX_SH_DEGREE, SH_COEFFS};
use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of coefficients used at `degree`.
#[inline]
pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values at `dir`; entries above `degree` are zero.
pub fn sh_basis(dir: [f64; 3], degree: usize) -> [f64; SH_COEFFS] {
    sh_basis_with_grad(dir, degree).0
}

/// Basis values and their partial derivatives with respect to the
/// (unnormalized) components of `dir`, treating `dir` as a free 3-vector.
pub fn sh_basis_with_grad(dir: [f64; 3], degree: usize) -> ([f64; SH_COEFFS], [[f64; 3]; SH_COEFFS]) {
    let [x, y, z] = dir;
    let mut b = [0.0; SH_COEFFS];
    let mut g = [[0.0; 3]; SH_COEFFS];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
        g[1] = [0.0, -SH_C1, 0.0];
        g[2] = [0.0, 0.0, SH_C1];
        g[3] = [-SH_C1, 0.0, 0.0];
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
        g[4] = [SH_C2[0] * y, SH_C2[0] * x, 0.0];
        g[5] = [0.0, SH_C2[1] * z, SH_C2[1] * y];
        g[6] = [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z];
        g[7] = [SH_C2[3] * z, 0.0, SH_C2[3] * x];
        g[8] = [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0];
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[9] = SH_C3[0] * y * (3.0 * xx - yy);
        b[10] = SH_C3[1] * x * y * z;
        b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
        b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
        b[14] = SH_C3[5] * z * (xx - yy);
        b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        g[9] = [SH_C3[0] * 6.0 * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
        g[10] = [SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y];
        g[11] = [
            SH_C3[2] * (-2.0 * x * y),
            SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
            SH_C3[2] * 8.0 * y * z,
        ];
        g[12] = [
            SH_C3[3] * (-6.0 * x * z),
            SH_C3[3] * (-6.0 * y * z),
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        ];
        g[13] = [
            SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
            SH_C3[4] * (-2.0 * x * y),
            SH_C3[4] * 8.0 * x * z,
        ];
        g[14] = [SH_C3[5] * 2.0 * x * z, -SH_C3[5] * 2.0 * y * z, SH_C3[5] * (xx - yy)];
        g[15] = [SH_C3[6] * (3.0 * xx - 3.0 * yy), -SH_C3[6] * 6.0 * x * y, 0.0];
    }
    (b, g)
}

/// Per channel `max(0, 0.5 + Σ c_k Y_k(dir))` over bands up to `degree`.
pub fn eval_sh_color(coeffs: &[[f64; SH_COEFFS]; 3], degree: usize, dir: [f64; 3]) -> Result<[f64; 3]> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::InvalidParameter(format!("SH degree {} > 3", degree)));
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::InvalidParameter(format!(
            "view direction {:?} is not unit length",
            dir
        )));
    }
    Ok(sh_color_raw(coeffs, degree, &sh_basis(dir, degree)).map(|v| v.max(0.0)))
}

/// `0.5 + Σ c_k Y_k` per channel, before the zero clamp.
#[inline]
pub(crate) fn sh_color_raw(
    coeffs: &[[f64; SH_COEFFS]; 3],
    degree: usize,
    basis: &[f64; SH_COEFFS],
) -> [f64; 3] {
    let n = coeff_count(degree);
    let mut out = [0.5; 3];
    for (ch, row) in coeffs.iter().enumerate() {
        for k in 0..n {
            out[ch] += row[k] * basis[k];
        }
    }
    out
}
