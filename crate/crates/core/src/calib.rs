//! XY-crosstalk model and drive correction.
//!
//! Drive line `k` leaks into qubit `j` with relative amplitude `a_jk` and
//! phase `phi_jk`, so the drive a qubit actually sees is `M x` for applied
//! drives `x`. Correcting means solving `M x = desired`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::C64;

/// Corrections are refused above this condition number.
pub const MAX_CONDITION: f64 = 1e6;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkMatrix {
    entries: DMatrix<C64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CrosstalkFile {
    n_qubits: usize,
    /// `amplitude[j][k]` = a_jk; diagonal ignored.
    amplitude: Vec<Vec<f64>>,
    /// `phase[j][k]` = phi_jk [rad]; diagonal ignored.
    phase: Vec<Vec<f64>>,
}

impl CrosstalkMatrix {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n || n == 0 {
            return param("crosstalk matrix must be square and nonempty");
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return param("crosstalk entries must be finite");
        }
        if (0..n).any(|j| (entries[(j, j)] - C64::new(1.0, 0.0)).norm() > 1e-12) {
            return param("crosstalk matrix must have unit diagonal");
        }
        Ok(Self { entries })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    /// `M_jk = a_jk e^{i phi_jk}` off the diagonal, 1 on it.
    pub fn from_amplitude_phase(amplitude: &DMatrix<f64>, phase: &DMatrix<f64>) -> Result<Self> {
        let n = amplitude.nrows();
        if amplitude.shape() != (n, n) || phase.shape() != (n, n) {
            return param("amplitude and phase matrices must be n x n");
        }
        Self::new(DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(amplitude[(j, k)], phase[(j, k)])
            }
        }))
    }

    /// Random crosstalk with `a_jk` uniform in `[0, a_max]` and uniform phases.
    pub fn synthetic(n: usize, a_max: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amp = DMatrix::zeros(n, n);
        let mut ph = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    amp[(j, k)] = rng.gen::<f64>() * a_max;
                    ph[(j, k)] = rng.gen::<f64>() * 2.0 * PI;
                }
            }
        }
        Self::from_amplitude_phase(&amp, &ph).expect("synthetic crosstalk is well formed")
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Ratio of extreme singular values.
    pub fn condition_number(&self) -> f64 {
        let sv = self.entries.clone().svd(false, false).singular_values;
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read crosstalk file {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: CrosstalkFile = toml::from_str(text).map_err(|e| Error::Config(format!("crosstalk file: {e}")))?;
        let n = f.n_qubits;
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !square(&f.amplitude) || !square(&f.phase) {
            return Err(Error::Config(format!("crosstalk matrices must be {n} x {n}")));
        }
        let amp = DMatrix::from_fn(n, n, |j, k| f.amplitude[j][k]);
        let ph = DMatrix::from_fn(n, n, |j, k| f.phase[j][k]);
        Self::from_amplitude_phase(&amp, &ph).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        let n = self.n();
        let grid = |f: &dyn Fn(C64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|j| (0..n).map(|k| if j == k { 0.0 } else { f(self.entries[(j, k)]) }).collect())
                .collect()
        };
        let file = CrosstalkFile {
            n_qubits: n,
            amplitude: grid(&|z| z.norm()),
            phase: grid(&|z| z.arg()),
        };
        toml::to_string(&file).expect("crosstalk file serialises")
    }
}

/// Complex drive `h_j e^{i phi_j}` per qubit [rad/ns].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveVector(pub Vec<C64>);

impl DriveVector {
    pub fn uniform(n: usize, amplitude: f64, phase: f64) -> Self {
        Self(vec![C64::from_polar(amplitude, phase); n])
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.arg()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return param(format!("drive vector has {} entries, expected {n}", self.0.len()));
        }
        if self.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return param("drive entries must be finite");
        }
        Ok(())
    }
}

/// Drives seen by the qubits: `M applied`.
pub fn effective_drive(m: &CrosstalkMatrix, applied: &DriveVector) -> Result<DriveVector> {
    applied.check(m.n())?;
    let x = DVector::from_column_slice(&applied.0);
    Ok(DriveVector((m.entries() * x).iter().copied().collect()))
}

/// Applied drives that realise `desired` after crosstalk, by LU solve.
pub fn correct_drive(m: &CrosstalkMatrix, desired: &DriveVector) -> Result<DriveVector> {
    desired.check(m.n())?;
    let cond = m.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let d = DVector::from_column_slice(&desired.0);
    let x = m
        .entries()
        .clone()
        .lu()
        .solve(&d)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let residual = (m.entries() * &x - &d).norm();
    if residual > RESIDUAL_TOL * d.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!("crosstalk solve residual {residual:e}")));
    }
    Ok(DriveVector(x.iter().copied().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub pass: bool,
    /// Largest `|h_j - median| / median`.
    pub max_amplitude_deviation: f64,
    /// Spread of phases about their circular mean [rad].
    pub phase_spread: f64,
    /// Qubits outside either tolerance.
    pub flagged: Vec<usize>,
    pub amplitude_tol: f64,
    pub phase_tol: f64,
}

pub const DEFAULT_AMPLITUDE_TOL: f64 = 0.01;
pub const DEFAULT_PHASE_TOL: f64 = 0.02;

pub fn uniformity_check(effective: &DriveVector, amplitude_tol: f64, phase_tol: f64) -> UniformityReport {
    let amps = effective.amplitudes();
    let mut sorted = amps.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let len = sorted.len();
    let median = if len == 0 {
        0.0
    } else if len % 2 == 1 {
        sorted[len / 2]
    } else {
        0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
    };
    let amp_dev: Vec<f64> = amps
        .iter()
        .map(|a| if median > 0.0 { (a - median).abs() / median } else { f64::INFINITY })
        .collect();
    let mean_dir: C64 = effective.0.iter().map(|z| z / z.norm().max(f64::MIN_POSITIVE)).sum();
    let reference = mean_dir.arg();
    let phase_dev: Vec<f64> = effective
        .phases()
        .iter()
        .map(|p| {
            let d = (p - reference).rem_euclid(2.0 * PI);
            if d > PI {
                d - 2.0 * PI
            } else {
                d
            }
        })
        .collect();
    let max_amplitude_deviation = amp_dev.iter().copied().fold(0.0, f64::max);
    let phase_spread = phase_dev.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - phase_dev.iter().copied().fold(f64::INFINITY, f64::min);
    let phase_spread = if len == 0 { 0.0 } else { phase_spread };
    let flagged: Vec<usize> = (0..len)
        .filter(|&j| amp_dev[j] > amplitude_tol || phase_dev[j].abs() > phase_tol / 2.0)
        .collect();
    UniformityReport {
        pass: max_amplitude_deviation <= amplitude_tol && phase_spread <= phase_tol,
        max_amplitude_deviation,
        phase_spread,
        flagged,
        amplitude_tol,
        phase_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_drives_through() {
        let m = CrosstalkMatrix::identity(4);
        let d = DriveVector(vec![C64::new(1.0, 2.0), C64::new(0.0, 1.0), C64::new(3.0, 0.0), C64::new(-1.0, 0.5)]);
        assert_eq!(effective_drive(&m, &d).unwrap(), d);
        let c = correct_drive(&m, &d).unwrap();
        for (a, b) in c.0.iter().zip(&d.0) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn two_qubit_leakage() {
        let amp = DMatrix::from_row_slice(2, 2, &[0.0, 0.08, 0.0, 0.0]);
        let ph = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.0, 0.0]);
        let m = CrosstalkMatrix::from_amplitude_phase(&amp, &ph).unwrap();
        let b = C64::from_polar(2.0, 1.1);
        let e = effective_drive(&m, &DriveVector(vec![C64::new(0.0, 0.0), b])).unwrap();
        assert!((e.0[0] - C64::from_polar(0.08 * 2.0, 0.4 + 1.1)).norm() < 1e-15);
        assert_eq!(e.0[1], b);
    }

    #[test]
    fn ill_conditioned_matrix_is_refused() {
        let e = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let m = CrosstalkMatrix::new(e).unwrap();
        assert!(matches!(correct_drive(&m, &DriveVector::uniform(2, 1.0, 0.0)), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn uniformity_flags_outlier() {
        let ok = uniformity_check(&DriveVector::uniform(5, 0.3, 0.1), DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL);
        assert!(ok.pass && ok.max_amplitude_deviation == 0.0 && ok.flagged.is_empty());
        let mut d = DriveVector::uniform(5, 0.3, 0.1);
        d.0[3] *= 1.05;
        let bad = uniformity_check(&d, DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL);
        assert!(!bad.pass);
        assert_eq!(bad.flagged, vec![3]);
        assert!((bad.max_amplitude_deviation - 0.05).abs() < 1e-12);
    }

    #[test]
    fn phases_wrap_around_pi() {
        let d = DriveVector(vec![C64::from_polar(1.0, PI - 0.001), C64::from_polar(1.0, -PI + 0.001)]);
        let r = uniformity_check(&d, DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn crosstalk_file_round_trip() {
        let m = CrosstalkMatrix::synthetic(3, 0.05, 4);
        let back = CrosstalkMatrix::from_toml_str(&m.to_toml_string()).unwrap();
        assert!((back.entries() - m.entries()).iter().all(|z| z.norm() < 1e-12));
    }
}
