use nalgebra::Matrix3;

use crate::camera::quat_to_matrix;
use crate::error::{Error, Result};

/// `R(q̂) · diag(exp(s))² · R(q̂)ᵀ`.
pub fn build_covariance(log_scale: [f64; 3], q: [f64; 4]) -> Result<Matrix3<f64>> {
    let norm2: f64 = q.iter().map(|v| v * v).sum();
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "quaternion {:?} cannot be normalized",
            q
        )));
    }
    Ok(covariance_from_normalized(log_scale, &quat_to_matrix(q)))
}

#[inline]
pub fn covariance_from_normalized(log_scale: [f64; 3], rotation: &Matrix3<f64>) -> Matrix3<f64> {
    let s = log_scale.map(|v| (2.0 * v).exp());
    let mut out = Matrix3::zeros();
    // Σ_ij = Σ_k R_ik R_jk s_k², written out so the result is exactly symmetric.
    for i in 0..3 {
        for j in i..3 {
            let v: f64 = (0..3).map(|k| rotation[(i, k)] * rotation[(j, k)] * s[k]).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}
