//! Mean-spin frame and the spin-squeezing parameter.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SymmetricEigen};
use serde::Serialize;

use crate::engine::StateVector;
use crate::error::{Error, Result};
use crate::observables::spin::{spin_moments, SpinMoments};

/// Below this `|<S>|` the mean direction is undefined.
pub const DEGENERATE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezingFrame {
    pub theta: f64,
    pub phi: f64,
    pub n0: [f64; 3],
    pub n1: [f64; 3],
    pub n2: [f64; 3],
    /// `<(S^{n1})^2>`, `<(S^{n2})^2>`, `<{S^{n1}, S^{n2}}>`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub xi2_closed: f64,
    pub xi2_scan: f64,
    pub vartheta_opt: f64,
}

/// Polar and azimuthal angle of `<S>`, with `phi` in `[0, 2 pi)`.
pub fn mean_spin_direction(m: &SpinMoments) -> Result<(f64, f64)> {
    let len = m.length();
    if !(len >= DEGENERATE_LENGTH) {
        return Err(Error::DegenerateDirection(len));
    }
    let theta = (m.mean[2] / len).clamp(-1.0, 1.0).acos();
    let mut phi = m.mean[1].atan2(m.mean[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi -= 2.0 * PI;
    }
    Ok((theta, phi))
}

/// Orthonormal triad: `n0` along the mean spin, `n1`, `n2` spanning the
/// perpendicular plane.
pub fn frame_vectors(theta: f64, phi: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        [st * cp, st * sp, ct],
        [-sp, cp, 0.0],
        [ct * cp, ct * sp, -st],
    )
}

/// `(2/N) [A + B - sqrt((A - B)^2 + C^2)]`.
pub fn xi2_closed_form(n: usize, a: f64, b: f64, c: f64) -> f64 {
    2.0 / n as f64 * (a + b - ((a - b).powi(2) + c * c).sqrt())
}

pub fn squeezing_from_moments(m: &SpinMoments) -> Result<SqueezingFrame> {
    let (theta, phi) = mean_spin_direction(m)?;
    let (n0, n1, n2) = frame_vectors(theta, phi);
    let a = m.quadratic(&n1, &n1);
    let b = m.quadratic(&n2, &n2);
    let c = 2.0 * m.quadratic(&n1, &n2);
    let xi2_closed = xi2_closed_form(m.n, a, b, c);

    // Transverse covariance in the (n1, n2) plane; its smallest eigenvalue is
    // the minimum over vartheta of Var(S . (n1 cos + n2 sin)).
    let cov = Matrix2::new(a, c / 2.0, c / 2.0, b);
    let eig = SymmetricEigen::new(cov);
    let imin = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let v = eig.eigenvectors.column(imin);
    let mut vartheta = v[1].atan2(v[0]);
    if vartheta < 0.0 {
        vartheta += PI;
    }
    let xi2_scan = (4.0 / m.n as f64 * eig.eigenvalues[imin]).max(0.0);

    Ok(SqueezingFrame {
        theta,
        phi,
        n0,
        n1,
        n2,
        a,
        b,
        c,
        xi2_closed,
        xi2_scan,
        vartheta_opt: vartheta,
    })
}

pub fn squeezing_parameter(state: &StateVector) -> Result<SqueezingFrame> {
    squeezing_from_moments(&spin_moments(state))
}
