//! Cones `K_β = {z : |arg z| ≤ πβ/2}` and the bilinear form `h.u`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{LabError, Result};

pub const CONE_SLACK: f64 = 1e-12;

/// A complex value tagged with the cone `K_β` it is meant to live in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeValue {
    pub value: Complex64,
    pub cone_index: f64,
}

impl ConeValue {
    /// Checked constructor; rejects values outside `K_β` beyond a `1e-12` slack.
    pub fn new(value: Complex64, cone_index: f64) -> Result<Self> {
        if !(cone_index > 0.0 && cone_index <= 2.0) {
            return Err(LabError::param(format!("cone index must lie in (0,2], got {cone_index}")));
        }
        if !in_cone(value, cone_index, CONE_SLACK) {
            return Err(LabError::domain(format!(
                "{value} is outside the cone K_{cone_index} (arg {:.6})",
                value.arg()
            )));
        }
        Ok(ConeValue { value, cone_index })
    }

    pub fn contains_self(&self) -> bool {
        in_cone(self.value, self.cone_index, CONE_SLACK)
    }
}

/// `|arg z| ≤ πβ/2 + slack`; zero belongs to every cone.
pub fn in_cone(z: Complex64, beta: f64, slack: f64) -> bool {
    z == Complex64::new(0.0, 0.0) || z.arg().abs() <= FRAC_PI_2 * beta + slack
}

/// `h.u = Re(u) h + Im(u) conj(h)`.
#[inline]
pub fn bilinear(h: Complex64, u: Complex64) -> Complex64 {
    h * u.re + h.conj() * u.im
}

/// `ǔ = Im u + i Re u`.
#[inline]
pub fn check_u(u: Complex64) -> Complex64 {
    Complex64::new(u.im, u.re)
}

/// Validates that `u` lies on the closed quarter circle `S¹₊`.
pub fn quarter_circle(u: Complex64) -> Result<Complex64> {
    if u.re < -1e-12 || u.im < -1e-12 || (u.norm() - 1.0).abs() > 1e-9 {
        return Err(LabError::domain(format!("u = {u} is not on the closed quarter circle")));
    }
    Ok(u)
}

pub fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}
