use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative slack on Cauchy–Schwarz before an input counts as invalid.
const CS_TOL: f64 = 1e-12;

/// `E[σ(z)σ(z')]` and `E[σ'(z)σ'(z')]` for ReLU σ and `(z, z') ~ N(0, [[sxx, sxy], [sxy, syy]])`.
///
/// With `ρ = sxy/√(sxx·syy)` and `θ = arccos ρ` these are
/// `√(sxx·syy)/(2π)·(sin θ + (π − θ) cos θ)` and `(π − θ)/(2π)`.
/// A zero variance gives `(0, 0)`.
pub fn relu_gauss_moments(sxx: f64, sxy: f64, syy: f64) -> Result<(f64, f64)> {
    if !(sxx >= 0.0 && syy >= 0.0) || !sxy.is_finite() || !sxx.is_finite() || !syy.is_finite() {
        return Err(Error::Domain(format!("invalid covariance ({sxx}, {sxy}, {syy})")));
    }
    let prod = sxx * syy;
    if prod == 0.0 {
        return Ok((0.0, 0.0));
    }
    let norm = prod.sqrt();
    let mut rho = sxy / norm;
    if rho.abs() > 1.0 {
        if rho.abs() - 1.0 > CS_TOL {
            return Err(Error::Domain(format!("covariance violates Cauchy-Schwarz: rho = {rho}")));
        }
        rho = rho.signum();
    }
    Ok(arccos_moments(norm, rho))
}

#[inline]
pub(crate) fn arccos_moments(norm: f64, rho: f64) -> (f64, f64) {
    let theta = rho.acos();
    let act = norm / (2.0 * PI) * (theta.sin() + (PI - theta) * rho);
    let der = (PI - theta) / (2.0 * PI);
    (act, der)
}

/// Kernel-internal variant: clips `ρ` into `[−1, 1]` after checking the same tolerance.
#[inline]
pub(crate) fn moments_unchecked(sxx: f64, sxy: f64, syy: f64) -> std::result::Result<(f64, f64), f64> {
    let prod = sxx * syy;
    if prod <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let norm = prod.sqrt();
    let rho = sxy / norm;
    if !rho.is_finite() || rho.abs() - 1.0 > CS_TOL {
        return Err(rho);
    }
    Ok(arccos_moments(norm, rho.clamp(-1.0, 1.0)))
}
