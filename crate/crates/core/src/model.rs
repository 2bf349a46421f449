//! Device parameters and Hamiltonian construction.
//!
//! Frequencies are angular, in rad/ns, everywhere inside the crate; the
//! device file and all outputs use linear frequencies in MHz. Convert only at
//! the boundary with [`mhz`] and [`to_mhz`].
//!
//! Basis convention for the full 2^N space: bit `j` of the basis index is the
//! state of qubit `j`, with `|0>` stored as bit 0 and `sigma^z |0> = +|0>`.
//! The pair sum of the flip-flop term runs over unordered pairs, so two
//! qubits with coupling `lambda` exchange an excitation at rate `lambda`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{Operator, C64, ZERO};

/// Default largest qubit count accepted by [`build_full_hamiltonian`].
pub const DEFAULT_QUBIT_CAP: usize = 20;

const BUILTIN_DEVICE: &str = include_str!("../data/device_16q.cfg");

/// MHz (linear) to rad/ns.
pub fn mhz(f: f64) -> f64 {
    f * 2.0 * PI * 1e-3
}

/// rad/ns to MHz (linear).
pub fn to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e-3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DeviceFile {
    n_qubits: usize,
    delta_mhz: f64,
    g_mhz: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_c_mhz: Option<Vec<Vec<f64>>>,
}

/// Qubit-bus couplings, detuning, crosstalk and readout fidelities of a device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub n_qubits: usize,
    /// Qubit-bus couplings g_j [rad/ns].
    pub g: Vec<f64>,
    /// Common detuning from the bus [rad/ns].
    pub delta: f64,
    /// Direct crosstalk couplings [rad/ns], symmetric with zero diagonal.
    pub lambda_c: DMatrix<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub labels: Vec<String>,
}

impl DeviceSpec {
    /// Builds a device with no direct crosstalk and perfect readout.
    pub fn new(g: Vec<f64>, delta: f64) -> Result<Self> {
        let n = g.len();
        let spec = Self {
            n_qubits: n,
            g,
            delta,
            lambda_c: DMatrix::zeros(n, n),
            f0: vec![1.0; n],
            f1: vec![1.0; n],
            labels: (1..=n).map(|j| format!("Q{j}")).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The shipped 16-qubit device (`data/device_16q.cfg`).
    pub fn builtin_16q() -> Self {
        Self::from_toml_str(BUILTIN_DEVICE).expect("builtin device file is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read device file {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DeviceFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("device file: {e}")))?;
        let n = file.n_qubits;
        let check_len = |name: &str, len: usize| {
            if len != n {
                Err(Error::Config(format!("{name} has {len} entries, expected {n}")))
            } else {
                Ok(())
            }
        };
        check_len("g_mhz", file.g_mhz.len())?;
        check_len("f0", file.f0.len())?;
        check_len("f1", file.f1.len())?;
        let lambda_c = match &file.lambda_c_mhz {
            None => DMatrix::zeros(n, n),
            Some(rows) => {
                check_len("lambda_c_mhz", rows.len())?;
                for r in rows {
                    check_len("lambda_c_mhz row", r.len())?;
                }
                DMatrix::from_fn(n, n, |i, j| mhz(rows[i][j]))
            }
        };
        let labels = match file.labels {
            Some(l) => {
                check_len("labels", l.len())?;
                l
            }
            None => (1..=n).map(|j| format!("Q{j}")).collect(),
        };
        let spec = Self {
            n_qubits: n,
            g: file.g_mhz.iter().map(|&v| mhz(v)).collect(),
            delta: mhz(file.delta_mhz),
            lambda_c,
            f0: file.f0,
            f1: file.f1,
            labels,
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        let has_lc = self.lambda_c.iter().any(|&v| v != 0.0);
        let file = DeviceFile {
            n_qubits: self.n_qubits,
            delta_mhz: to_mhz(self.delta),
            g_mhz: self.g.iter().map(|&v| to_mhz(v)).collect(),
            f0: self.f0.clone(),
            f1: self.f1.clone(),
            labels: Some(self.labels.clone()),
            lambda_c_mhz: has_lc.then(|| {
                (0..self.n_qubits)
                    .map(|i| (0..self.n_qubits).map(|j| to_mhz(self.lambda_c[(i, j)])).collect())
                    .collect()
            }),
        };
        toml::to_string(&file).expect("device file serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits;
        if n < 2 {
            return param(format!("n_qubits must be >= 2, got {n}"));
        }
        if self.g.len() != n || self.f0.len() != n || self.f1.len() != n || self.labels.len() != n {
            return param("per-qubit arrays must have n_qubits entries");
        }
        if let Some(j) = self.g.iter().position(|&g| !(g > 0.0) || !g.is_finite()) {
            return param(format!("g[{j}] must be positive"));
        }
        for (name, f) in [("f0", &self.f0), ("f1", &self.f1)] {
            if let Some(j) = f.iter().position(|&v| !(v > 0.0 && v <= 1.0)) {
                return param(format!("{name}[{j}] = {} outside (0, 1]", f[j]));
            }
        }
        if self.lambda_c.nrows() != n || self.lambda_c.ncols() != n {
            return param("lambda_c must be n x n");
        }
        check_symmetric_zero_diag(&self.lambda_c, "lambda_c")?;
        if !self.delta.is_finite() {
            return param("delta must be finite");
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_lambda_c(mut self, lambda_c: DMatrix<f64>) -> Result<Self> {
        self.lambda_c = lambda_c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_perfect_readout(mut self) -> Self {
        self.f0 = vec![1.0; self.n_qubits];
        self.f1 = vec![1.0; self.n_qubits];
        self
    }

    /// The first `n` qubits of the device.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_qubits {
            return param(format!("cannot take {n} qubits of a {}-qubit device", self.n_qubits));
        }
        Ok(Self {
            n_qubits: n,
            g: self.g[..n].to_vec(),
            delta: self.delta,
            lambda_c: self.lambda_c.view((0, 0), (n, n)).into_owned(),
            f0: self.f0[..n].to_vec(),
            f1: self.f1[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        })
    }
}

fn check_symmetric_zero_diag(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return param(format!("{name} must have zero diagonal"));
        }
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return param(format!("{name} must be symmetric ({i},{j})"));
            }
        }
    }
    Ok(())
}

/// `lambda_ij = g_i g_j / delta + lambda^c_ij` off the diagonal, zero on it.
pub fn build_coupling_matrix(spec: &DeviceSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.delta == 0.0 {
        return param("detuning must be nonzero");
    }
    let n = spec.n_qubits;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            spec.g[i] * spec.g[j] / spec.delta + spec.lambda_c[(i, j)]
        }
    }))
}

/// Rank-one part `scale * g g^T` of a coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    pub g: Vec<f64>,
    pub scale: f64,
}

/// Couplings and drive of the quenched Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianModel {
    /// Symmetric coupling matrix with zero diagonal [rad/ns].
    pub lambda: DMatrix<f64>,
    /// Uniform transverse field amplitude [rad/ns].
    pub hx: f64,
    /// Drive phases [rad].
    pub phases: Vec<f64>,
    /// Per-qubit amplitudes overriding `hx`.
    pub per_qubit_hx: Option<Vec<f64>>,
    /// Optional factorisation hint; only changes how the operator is applied.
    pub separable: Option<Separable>,
}

impl HamiltonianModel {
    pub fn new(lambda: DMatrix<f64>, hx: f64) -> Result<Self> {
        let n = lambda.nrows();
        if lambda.ncols() != n || n < 1 {
            return param("coupling matrix must be square");
        }
        check_symmetric_zero_diag(&lambda, "lambda")?;
        Ok(Self {
            lambda,
            hx,
            phases: vec![0.0; n],
            per_qubit_hx: None,
            separable: None,
        })
    }

    /// All pairs coupled with the same `lambda`.
    pub fn uniform(n: usize, lambda: f64, hx: f64) -> Result<Self> {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { lambda });
        let mut model = Self::new(m, hx)?;
        model.separable = Some(Separable {
            g: vec![1.0; n],
            scale: lambda,
        });
        Ok(model)
    }

    pub fn from_device(spec: &DeviceSpec, hx: f64) -> Result<Self> {
        let lambda = build_coupling_matrix(spec)?;
        let mut model = Self::new(lambda, hx)?;
        model.separable = Some(Separable {
            g: spec.g.clone(),
            scale: 1.0 / spec.delta,
        });
        Ok(model)
    }

    /// Replaces the uniform drive by per-qubit complex drives `h_j e^{i phi_j}`.
    pub fn with_drives(mut self, drives: &[C64]) -> Result<Self> {
        if drives.len() != self.n() {
            return param("drive vector length must equal the qubit count");
        }
        self.per_qubit_hx = Some(drives.iter().map(|d| d.norm()).collect());
        self.phases = drives.iter().map(|d| d.arg()).collect();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    /// Amplitude and phase of the drive on qubit `j`.
    pub fn drive(&self, j: usize) -> (f64, f64) {
        let amp = self.per_qubit_hx.as_ref().map_or(self.hx, |h| h[j]);
        (amp, self.phases[j])
    }

    /// Mean of the off-diagonal couplings over unordered pairs.
    pub fn mean_coupling(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += self.lambda[(i, j)];
            }
        }
        s / (n * (n - 1) / 2) as f64
    }

    /// True when all couplings, amplitudes and phases agree within `tol` (relative).
    pub fn is_uniform(&self, tol: f64) -> bool {
        let n = self.n();
        let lam = self.mean_coupling();
        let scale = lam.abs().max(1e-300);
        let couplings_equal = (0..n)
            .all(|i| (0..n).all(|j| i == j || (self.lambda[(i, j)] - lam).abs() <= tol * scale));
        let (a0, p0) = self.drive(0);
        let drives_equal = (0..n).all(|j| {
            let (a, p) = self.drive(j);
            (a - a0).abs() <= tol * a0.abs().max(1e-300) && (p - p0).abs() <= tol
        });
        couplings_equal && drives_equal
    }
}

/// Matrix-free representation of the quenched Hamiltonian on the 2^N space.
pub struct FullHamiltonian {
    n: usize,
    dim: usize,
    separable: Option<Separable>,
    /// `-scale * sum_j g_j^2 n_j(b)`, present with `separable`.
    diag: Vec<f64>,
    /// (bit mask of the pair, coupling) for couplings not covered by `separable`.
    pairs: Vec<(usize, f64)>,
    /// Field coefficient applied when the target bit is 1 (resp. 0).
    field_up: Vec<C64>,
    field_down: Vec<C64>,
    nonzeros: usize,
}

impl FullHamiltonian {
    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Number of structurally nonzero matrix elements.
    pub fn structural_nonzeros(&self) -> usize {
        self.nonzeros
    }
}

/// Calls `f(lo, hi)` for every index pair differing only in `bit`, with
/// `lo` having the bit cleared.
#[inline(always)]
fn for_each_pair(dim: usize, bit: usize, mut f: impl FnMut(usize, usize)) {
    let mut base = 0;
    while base < dim {
        for lo in base..base + bit {
            f(lo, lo + bit);
        }
        base += 2 * bit;
    }
}

impl Operator for FullHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.dim;
        match &self.separable {
            Some(sep) => {
                for ((yb, xb), db) in y.iter_mut().zip(x).zip(&self.diag) {
                    *yb = xb * db;
                }
                // w = a x with a = sum_j g_j |0><1|_j, then y += scale a^dagger w.
                let mut w = vec![ZERO; d];
                for (j, &g) in sep.g.iter().enumerate() {
                    for_each_pair(d, 1 << j, |lo, hi| w[lo] += x[hi] * g);
                }
                for (j, &g) in sep.g.iter().enumerate() {
                    let c = g * sep.scale;
                    for_each_pair(d, 1 << j, |lo, hi| y[hi] += w[lo] * c);
                }
            }
            None => y.iter_mut().for_each(|v| *v = ZERO),
        }
        for &(mask, lam) in &self.pairs {
            let low = mask & mask.wrapping_neg();
            let high = mask ^ low;
            // Each differing pair once: high bit set, low bit clear.
            for b in 0..d {
                if b & high != 0 && b & low == 0 {
                    let p = b ^ mask;
                    y[b] += x[p] * lam;
                    y[p] += x[b] * lam;
                }
            }
        }
        for j in 0..self.n {
            let (up, down) = (self.field_up[j], self.field_down[j]);
            if up.im == 0.0 && down.im == 0.0 {
                let h = up.re;
                if h == 0.0 {
                    continue;
                }
                for_each_pair(d, 1 << j, |lo, hi| {
                    y[lo] += x[hi] * h;
                    y[hi] += x[lo] * h;
                });
            } else {
                for_each_pair(d, 1 << j, |lo, hi| {
                    y[lo] += down * x[hi];
                    y[hi] += up * x[lo];
                });
            }
        }
    }
}

pub fn build_full_hamiltonian(model: &HamiltonianModel) -> Result<FullHamiltonian> {
    build_full_hamiltonian_with_cap(model, DEFAULT_QUBIT_CAP)
}

pub fn build_full_hamiltonian_with_cap(model: &HamiltonianModel, cap: usize) -> Result<FullHamiltonian> {
    let n = model.n();
    if n > cap {
        return Err(Error::Capacity(format!("{n} qubits exceeds the cap of {cap}")));
    }
    if n >= usize::BITS as usize - 1 {
        return Err(Error::Capacity(format!("{n} qubits cannot be indexed")));
    }
    let dim = 1usize << n;
    let lam_scale = model.lambda.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let (separable, diag) = match &model.separable {
        Some(sep) if sep.g.len() == n => {
            let diag = (0..dim)
                .map(|b| {
                    -sep.scale
                        * (0..n).filter(|&j| (b >> j) & 1 == 1).map(|j| sep.g[j] * sep.g[j]).sum::<f64>()
                })
                .collect();
            (Some(sep.clone()), diag)
        }
        _ => (None, Vec::new()),
    };

    let mut pairs = Vec::new();
    let mut nonzeros = 0;
    for i in 0..n {
        for j in i + 1..n {
            let lam = model.lambda[(i, j)];
            if lam != 0.0 {
                nonzeros += dim / 2;
            }
            let residual = match &separable {
                Some(sep) => lam - sep.scale * sep.g[i] * sep.g[j],
                None => lam,
            };
            if residual.abs() > 1e-14 * lam_scale {
                pairs.push(((1usize << i) | (1usize << j), residual));
            }
        }
    }

    let mut field_up = Vec::with_capacity(n);
    let mut field_down = Vec::with_capacity(n);
    for j in 0..n {
        let (amp, phase) = model.drive(j);
        if amp != 0.0 {
            nonzeros += dim;
        }
        field_up.push(C64::from_polar(amp, phase));
        field_down.push(C64::from_polar(amp, -phase));
    }

    Ok(FullHamiltonian {
        n,
        dim,
        separable,
        diag,
        pairs,
        field_up,
        field_down,
        nonzeros,
    })
}

/// Collective-spin model `-(J/N) (S^z)^2 + mu S^x` in the symmetric sector.
///
/// The sign of `j_coupling` selects the sign of the `(S^z)^2` term; the
/// dynamical critical point `mu_c = |J|/2` does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmgModel {
    pub n: usize,
    pub j_coupling: f64,
    pub mu: f64,
}

impl LmgModel {
    pub fn new(n: usize, j_coupling: f64, mu: f64) -> Result<Self> {
        if n < 2 {
            return param(format!("LMG size must be >= 2, got {n}"));
        }
        Ok(Self { n, j_coupling, mu })
    }

    /// Collective model equivalent to uniform couplings `lambda` and field `hx`.
    ///
    /// Inside the symmetric sector the flip-flop term equals
    /// `lambda (S^2 - (S^z)^2) - N lambda / 2`, so `J = N lambda` and
    /// `mu = 2 hx`, up to a constant energy shift.
    pub fn from_uniform(n: usize, lambda: f64, hx: f64) -> Result<Self> {
        Self::new(n, n as f64 * lambda, 2.0 * hx)
    }

    pub fn critical_mu(&self) -> f64 {
        self.j_coupling.abs() / 2.0
    }
}

/// Real symmetric tridiagonal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Operator for Tridiagonal {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.diag.len();
        for k in 0..d {
            let mut acc = x[k] * self.diag[k];
            if k > 0 {
                acc += x[k - 1] * self.off[k - 1];
            }
            if k + 1 < d {
                acc += x[k + 1] * self.off[k];
            }
            y[k] = acc;
        }
    }
}

/// `<k+1| S^- |k>` for the Dicke basis ordered by excitation count `k`
/// (`m = N/2 - k`).
pub fn dicke_lowering(n: usize) -> Vec<f64> {
    let s = n as f64 / 2.0;
    (0..n)
        .map(|k| {
            let m = s - k as f64;
            (s * (s + 1.0) - m * (m - 1.0)).sqrt()
        })
        .collect()
}

/// LMG Hamiltonian in the `|S = N/2, m>` basis, index 0 being `m = +N/2`.
pub fn build_lmg_hamiltonian(lmg: &LmgModel) -> Tridiagonal {
    let n = lmg.n;
    let s = n as f64 / 2.0;
    let diag = (0..=n)
        .map(|k| {
            let m = s - k as f64;
            -(lmg.j_coupling / n as f64) * m * m
        })
        .collect();
    let off = dicke_lowering(n).into_iter().map(|c| lmg.mu * c / 2.0).collect();
    Tridiagonal { diag, off }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    /// Predicted critical transverse field [rad/ns].
    pub hx_c: f64,
    /// Mean off-diagonal coupling [rad/ns].
    pub mean_lambda: f64,
}

/// `hx_c = N |mean lambda| / 4`, the mean-field critical field of the
/// equivalent collective model.
pub fn predict_critical_field(model: &HamiltonianModel) -> Result<CriticalPoint> {
    let n = model.n();
    if n < 2 {
        return param("critical field needs at least two qubits");
    }
    let mean_lambda = model.mean_coupling();
    if mean_lambda == 0.0 {
        return param("critical field undefined for zero couplings");
    }
    Ok(CriticalPoint {
        hx_c: n as f64 * mean_lambda.abs() / 4.0,
        mean_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_defect, to_dense, DenseExponential, ONE};

    #[test]
    fn table_coupling_q1_pair() {
        let g = mhz(27.6);
        let spec = DeviceSpec::new(vec![g, g], mhz(-450.0)).unwrap();
        let lam = build_coupling_matrix(&spec).unwrap();
        assert!((to_mhz(lam[(0, 1)]) - (-1.6928)).abs() < 1e-3);
        assert_eq!(lam[(0, 0)], 0.0);
        assert_eq!(lam[(1, 1)], 0.0);
    }

    #[test]
    fn zero_detuning_is_rejected() {
        let spec = DeviceSpec::new(vec![0.1, 0.1], 0.0).unwrap();
        assert!(matches!(build_coupling_matrix(&spec), Err(Error::Parameter(_))));
    }

    #[test]
    fn device_validation() {
        assert!(DeviceSpec::new(vec![0.1], -1.0).is_err());
        assert!(DeviceSpec::new(vec![0.1, -0.1], -1.0).is_err());
        let mut d = DeviceSpec::new(vec![0.1, 0.1], -1.0).unwrap();
        d.f0[1] = 0.0;
        assert!(d.validate().is_err());
        let lc = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]);
        assert!(DeviceSpec::new(vec![0.1, 0.1], -1.0).unwrap().with_lambda_c(lc).is_err());
    }

    #[test]
    fn builtin_device_round_trips_through_toml() {
        let d = DeviceSpec::builtin_16q();
        assert_eq!(d.n_qubits, 16);
        assert_eq!(d.f0[0], 0.979);
        let back = DeviceSpec::from_toml_str(&d.to_toml_string()).unwrap();
        assert_eq!(back.n_qubits, 16);
        for j in 0..16 {
            assert!((back.g[j] - d.g[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn device_file_length_mismatch_is_config_error() {
        let text = "n_qubits = 3\ndelta_mhz = -450\ng_mhz = [1, 2]\nf0 = [1,1,1]\nf1 = [1,1,1]\n";
        assert!(matches!(DeviceSpec::from_toml_str(text), Err(Error::Config(_))));
    }

    #[test]
    fn two_qubit_flip_flop_spectrum() {
        let lam = 0.37;
        let model = HamiltonianModel::uniform(2, lam, 0.0).unwrap();
        let h = build_full_hamiltonian(&model).unwrap();
        let de = DenseExponential::from_operator(&h);
        let mut ev: Vec<f64> = de.eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [-lam, 0.0, 0.0, lam];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn zero_field_annihilates_vacuum() {
        let spec = DeviceSpec::builtin_16q();
        let model = HamiltonianModel::from_device(&spec, 0.0).unwrap();
        let h = build_full_hamiltonian(&model).unwrap();
        let mut x = vec![ZERO; h.dim()];
        x[0] = ONE;
        let mut y = vec![ONE; h.dim()];
        h.apply(&x, &mut y);
        assert!(y.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn separable_path_matches_generic_pairs() {
        let spec = DeviceSpec::new(vec![0.17, 0.21, 0.19, 0.15, 0.2], mhz(-450.0)).unwrap();
        let with = HamiltonianModel::from_device(&spec, 0.031).unwrap();
        let mut without = with.clone();
        without.separable = None;
        let a = to_dense(&build_full_hamiltonian(&with).unwrap());
        let b = to_dense(&build_full_hamiltonian(&without).unwrap());
        assert!((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);
    }

    #[test]
    fn capacity_cap_is_enforced() {
        let model = HamiltonianModel::uniform(6, 0.1, 0.1).unwrap();
        assert!(matches!(build_full_hamiltonian_with_cap(&model, 5), Err(Error::Capacity(_))));
    }

    #[test]
    fn nonzero_count_within_bound() {
        let n = 6;
        let model = HamiltonianModel::uniform(n, 0.1, 0.2).unwrap();
        let h = build_full_hamiltonian(&model).unwrap();
        let dense = to_dense(&h);
        let counted = dense.iter().filter(|z| z.norm() > 1e-12).count();
        assert_eq!(counted, h.structural_nonzeros());
        assert!(counted <= n * (1 << n) + n * (n - 1) * (1 << (n - 1)));
    }

    #[test]
    fn lmg_builders() {
        let h = build_lmg_hamiltonian(&LmgModel::new(4, 1.3, 0.0).unwrap());
        assert_eq!(h.off, vec![0.0; 4]);
        for (k, d) in h.diag.iter().enumerate() {
            let m = 2.0 - k as f64;
            assert!((d + 1.3 / 4.0 * m * m).abs() < 1e-15);
        }
        let h = build_lmg_hamiltonian(&LmgModel::new(2, 0.0, 1.0).unwrap());
        let de = DenseExponential::from_operator(&h);
        let mut ev: Vec<f64> = de.eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(hermiticity_defect(&to_dense(&build_lmg_hamiltonian(&LmgModel::new(7, -0.4, 0.9).unwrap()))) == 0.0);
    }

    #[test]
    fn critical_field_scales_quadratically_with_g() {
        let spec = DeviceSpec::builtin_16q();
        let a = predict_critical_field(&HamiltonianModel::from_device(&spec, 0.0).unwrap()).unwrap();
        let mut scaled = spec.clone();
        scaled.g.iter_mut().for_each(|g| *g *= 1.7);
        let b = predict_critical_field(&HamiltonianModel::from_device(&scaled, 0.0).unwrap()).unwrap();
        assert!((b.hx_c / a.hx_c - 1.7 * 1.7).abs() < 1e-12);
        assert!((a.hx_c - 16.0 * a.mean_lambda.abs() / 4.0).abs() < 1e-15);
    }
}
