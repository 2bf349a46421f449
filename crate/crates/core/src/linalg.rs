//! Linear operators on complex state vectors and exponential propagators.
//!
//! Everything that acts on a state implements [`Operator`]. Two ways of
//! applying `exp(-i H t)` are provided: a Lanczos/Krylov propagator for the
//! large sparse operators used in production runs, and an exact dense
//! eigendecomposition used as an oracle on small systems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// A linear operator `y = H x` on a complex vector space of fixed dimension.
pub trait Operator: Sync {
    fn dim(&self) -> usize;

    /// Overwrites `y` with `H x`.
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl<T: Operator + ?Sized> Operator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        (**self).apply(x, y)
    }
}

/// `factor * H`, used for time reversal (`factor = -1`).
pub struct Scaled<O> {
    pub inner: O,
    pub factor: f64,
}

impl<O: Operator> Operator for Scaled<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.inner.apply(x, y);
        for v in y.iter_mut() {
            *v *= self.factor;
        }
    }
}

/// `<a|b>`, conjugating `a`. Four independent accumulators keep the loop
/// pipelined.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            re[k] += x[k].re * y[k].re + x[k].im * y[k].im;
            im[k] += x[k].re * y[k].im - x[k].im * y[k].re;
        }
    }
    let mut acc = C64::new(re.iter().sum(), im.iter().sum());
    for (x, y) in ra.iter().zip(rb) {
        acc += x.conj() * y;
    }
    acc
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `<x|H|x>`; real part only, the operators here are Hermitian.
pub fn expectation(op: &dyn Operator, x: &[C64]) -> f64 {
    let mut y = vec![ZERO; x.len()];
    op.apply(x, &mut y);
    dot(x, &y).re
}

/// Materialises an operator column by column. Only meant for small dimensions.
pub fn to_dense(op: &dyn Operator) -> DMatrix<C64> {
    let n = op.dim();
    let mut m = DMatrix::from_element(n, n, ZERO);
    let mut e = vec![ZERO; n];
    let mut col = vec![ZERO; n];
    for j in 0..n {
        e[j] = ONE;
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = ZERO;
    }
    m
}

pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Exact propagator from a full Hermitian eigendecomposition.
pub struct DenseExponential {
    values: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl DenseExponential {
    pub fn new(h: DMatrix<C64>) -> Self {
        let eig = SymmetricEigen::new(h);
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn from_operator(op: &dyn Operator) -> Self {
        Self::new(to_dense(op))
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// Returns `exp(-i H t) psi`.
    pub fn evolve(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let v = DVector::from_column_slice(psi);
        let mut c = self.vectors.adjoint() * v;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= C64::from_polar(1.0, -self.values[k] * t);
        }
        (&self.vectors * c).iter().copied().collect()
    }
}

/// Adaptive Lanczos propagator for Hermitian operators.
///
/// Each call to [`Krylov::evolve`] advances by an arbitrary time, splitting it
/// into sub-steps whose a-posteriori error estimate stays below `tol`.
pub struct Krylov {
    max_dim: usize,
    tol: f64,
    basis: Vec<Vec<C64>>,
    scratch: Vec<C64>,
    step_hint: Option<f64>,
    pub matvecs: usize,
}

impl Krylov {
    pub fn new(dim: usize, max_dim: usize, tol: f64) -> Self {
        let max_dim = max_dim.clamp(2, dim.max(2));
        Self {
            max_dim,
            tol,
            basis: Vec::with_capacity(max_dim + 1),
            scratch: vec![ZERO; dim],
            step_hint: None,
            matvecs: 0,
        }
    }

    pub fn evolve(&mut self, op: &dyn Operator, psi: &mut [C64], t: f64) -> Result<()> {
        if op.dim() != psi.len() {
            return Err(Error::Parameter(format!(
                "operator dimension {} does not match state length {}",
                op.dim(),
                psi.len()
            )));
        }
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        let mut remaining = t.abs();
        while remaining > 0.0 {
            let tau = self.step_hint.unwrap_or(remaining).min(remaining);
            let taken = self.substep(op, psi, sign * tau)?.abs();
            remaining -= taken;
            if remaining < 1e-14 * t.abs() {
                break;
            }
        }
        Ok(())
    }

    /// Takes one Krylov step of at most `tau`; returns the time actually advanced.
    fn substep(&mut self, op: &dyn Operator, psi: &mut [C64], tau: f64) -> Result<f64> {
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok(tau);
        }
        let n = psi.len();
        if self.basis.is_empty() {
            self.basis.push(vec![ZERO; n]);
        }
        for (b, p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *b = p / beta0;
        }
        let mut alpha: Vec<f64> = Vec::with_capacity(self.max_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(self.max_dim);
        let mut tau = tau;
        let mut accepted: Option<(usize, Vec<C64>)> = None;

        for j in 0..self.max_dim {
            op.apply(&self.basis[j], &mut self.scratch);
            self.matvecs += 1;
            let w = &mut self.scratch;
            let aj = dot(&self.basis[j], w).re;
            alpha.push(aj);
            // Modified Gram-Schmidt against the whole basis.
            for v in &self.basis[..=j] {
                let c = dot(v, w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            let b = norm(w);
            let m = j + 1;
            let scale = aj.abs() + beta.last().copied().unwrap_or(0.0);
            if b <= 1e-12 * scale.max(1e-300) || m == n {
                // Invariant subspace or the whole space: the projection is exact.
                accepted = Some((m, tridiag_exp(&alpha, &beta, tau)));
                break;
            }
            let coeffs = tridiag_exp(&alpha, &beta, tau);
            if b * coeffs[m - 1].norm() <= self.tol {
                // Steps clipped to the end of the interval must not shrink the hint.
                let grown = if m < self.max_dim / 2 { tau.abs() * 1.5 } else { tau.abs() };
                self.step_hint = Some(self.step_hint.map_or(grown, |h| h.max(grown)));
                accepted = Some((m, coeffs));
                break;
            }
            beta.push(b);
            if m == self.max_dim {
                break;
            }
            if self.basis.len() <= m {
                self.basis.push(vec![ZERO; n]);
            }
            for (vi, wi) in self.basis[m].iter_mut().zip(self.scratch.iter()) {
                *vi = wi / b;
            }
        }

        let (m, coeffs) = match accepted {
            Some(a) => a,
            None => {
                // Basis exhausted: shrink the step until the estimate passes.
                let m = alpha.len();
                let b_last = beta[m - 1];
                loop {
                    tau *= 0.5;
                    let coeffs = tridiag_exp(&alpha, &beta[..m - 1], tau);
                    if b_last * coeffs[m - 1].norm() <= self.tol {
                        self.step_hint = Some(tau.abs());
                        break (m, coeffs);
                    }
                    if tau.abs() < 1e-300 {
                        return Err(Error::Numerical("Krylov step size underflow".into()));
                    }
                }
            }
        };

        psi.iter_mut().for_each(|z| *z = ZERO);
        for (k, ck) in coeffs.iter().enumerate().take(m) {
            let c = ck * beta0;
            for (p, v) in psi.iter_mut().zip(&self.basis[k]) {
                *p += c * v;
            }
        }
        Ok(tau)
    }
}

/// `exp(-i tau T) e_1` for the real symmetric tridiagonal `T` with diagonal
/// `alpha` and off-diagonal `beta` (`beta.len() >= alpha.len() - 1`).
fn tridiag_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (0..m)
        .map(|i| {
            (0..m).fold(ZERO, |acc, k| {
                acc + C64::from_polar(1.0, -eig.eigenvalues[k] * tau)
                    * (eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)])
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Diag(Vec<f64>);
    impl Operator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[C64], y: &mut [C64]) {
            for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.0) {
                *yi = xi * d;
            }
        }
    }

    #[test]
    fn krylov_on_diagonal_operator_matches_phases() {
        let d = Diag(vec![0.3, -1.2, 2.5, 0.0, 4.0]);
        let mut psi: Vec<C64> = (0..5).map(|k| C64::new(1.0 + k as f64, 0.5)).collect();
        let n0 = norm(&psi);
        psi.iter_mut().for_each(|z| *z /= n0);
        let start = psi.clone();
        let mut kr = Krylov::new(5, 30, 1e-12);
        kr.evolve(&d, &mut psi, 3.7).unwrap();
        for k in 0..5 {
            let want = start[k] * C64::from_polar(1.0, -d.0[k] * 3.7);
            assert!((psi[k] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn dense_exponential_is_unitary() {
        let d = Diag(vec![1.0, 2.0, 3.0]);
        let de = DenseExponential::from_operator(&d);
        let psi = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO];
        let out = de.evolve(&psi, 10.0);
        assert!((norm(&out) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = Diag(vec![1.0, 2.0]);
        let mut psi = vec![ONE; 3];
        let mut kr = Krylov::new(3, 10, 1e-10);
        assert!(matches!(kr.evolve(&d, &mut psi, 1.0), Err(Error::Parameter(_))));
    }
}
