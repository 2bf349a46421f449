//! Husimi Q-function on spin coherent states.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::engine::{binomial, SpaceTag, StateVector};
use crate::error::{param, Result};
use crate::linalg::{C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct QMesh {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl QMesh {
    /// `n_theta` points on `[0, pi]` inclusive and `n_phi` points `2 pi j / n_phi`.
    pub fn regular(n_theta: usize, n_phi: usize) -> Self {
        let theta = match n_theta {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..n_theta).map(|i| PI * i as f64 / (n_theta - 1) as f64).collect(),
        };
        let phi = (0..n_phi).map(|j| 2.0 * PI * j as f64 / n_phi as f64).collect();
        Self { theta, phi }
    }
}

impl Default for QMesh {
    fn default() -> Self {
        Self::regular(64, 128)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QField {
    pub mesh: QMesh,
    /// `|<theta, phi|psi>|^2`, row-major in theta.
    pub raw: Vec<f64>,
    /// `raw` scaled to unit maximum.
    pub normalized: Vec<f64>,
}

impl QField {
    pub fn at(&self, i_theta: usize, i_phi: usize) -> f64 {
        self.normalized[i_theta * self.mesh.phi.len() + i_phi]
    }

    /// Rows `theta,phi,q_raw,q`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "theta,phi,q_raw,q")?;
        let np = self.mesh.phi.len();
        for (i, th) in self.mesh.theta.iter().enumerate() {
            for (j, ph) in self.mesh.phi.iter().enumerate() {
                let k = i * np + j;
                writeln!(w, "{th},{ph},{:e},{:e}", self.raw[k], self.normalized[k])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum of amplitudes per excitation number; the coherent-state overlap
/// depends on the state only through these.
fn excitation_sums(state: &StateVector) -> Vec<C64> {
    let n = state.n_qubits();
    match state.space {
        SpaceTag::Symmetric => state
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| a * binomial(n, k).sqrt())
            .collect(),
        SpaceTag::Full => {
            let mut s = vec![ZERO; n + 1];
            for (b, a) in state.amplitudes.iter().enumerate() {
                s[b.count_ones() as usize] += a;
            }
            s
        }
    }
}

/// Q over the mesh, with `|theta, phi> = prod_j (cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>)`.
pub fn q_function(state: &StateVector, mesh: &QMesh) -> Result<QField> {
    if mesh.theta.is_empty() || mesh.phi.is_empty() {
        return param("empty Q-function mesh");
    }
    let n = state.n_qubits();
    let sums = excitation_sums(state);
    let np = mesh.phi.len();
    let raw: Vec<f64> = mesh
        .theta
        .par_iter()
        .flat_map_iter(|&th| {
            let (s, c) = (th / 2.0).sin_cos();
            let weights: Vec<C64> = (0..=n)
                .map(|k| sums[k] * (c.powi((n - k) as i32) * s.powi(k as i32)))
                .collect();
            mesh.phi.iter().map(move |&ph| {
                let step = C64::from_polar(1.0, -ph);
                let mut phase = C64::new(1.0, 0.0);
                let mut acc = ZERO;
                for w in &weights {
                    acc += w * phase;
                    phase *= step;
                }
                acc.norm_sqr()
            })
        })
        .collect();
    debug_assert_eq!(raw.len(), mesh.theta.len() * np);
    let peak = raw.iter().copied().fold(0.0, f64::max);
    let normalized = if peak > 0.0 { raw.iter().map(|v| v / peak).collect() } else { raw.clone() };
    Ok(QField {
        mesh: mesh.clone(),
        raw,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::initial_state;

    #[test]
    fn vacuum_peaks_at_north_pole() {
        let s = initial_state(SpaceTag::Full, 6).unwrap();
        let q = q_function(&s, &QMesh::regular(9, 8)).unwrap();
        assert_eq!(q.at(0, 3), 1.0);
        assert!(q.at(8, 0) < 1e-30);
    }

    #[test]
    fn x_polarised_state_peaks_on_equator() {
        let n = 5;
        let a = C64::new((1.0 / 32.0f64).sqrt(), 0.0);
        let s = StateVector::new(vec![a; 1 << n], SpaceTag::Full, 0.0).unwrap();
        let q = q_function(&s, &QMesh::regular(5, 8)).unwrap();
        assert!((q.at(2, 0) - 1.0).abs() < 1e-12);
        assert!(q.at(2, 4) < 1e-12);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let s = initial_state(SpaceTag::Full, 2).unwrap();
        assert!(q_function(&s, &QMesh::regular(0, 4)).is_err());
    }
}
