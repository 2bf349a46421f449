//! Collective spin moments evaluated directly on state vectors.

use serde::{Deserialize, Serialize};

use crate::engine::{SpaceTag, StateVector};
use crate::linalg::{dot, C64, ZERO};
use crate::model::dicke_lowering;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// First and symmetrised second moments of `S = sum_j sigma_j / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMoments {
    pub n: usize,
    /// `<S^x>, <S^y>, <S^z>`.
    pub mean: [f64; 3],
    /// `<{S^a, S^b}> / 2`.
    pub second: [[f64; 3]; 3],
}

impl SpinMoments {
    pub fn length(&self) -> f64 {
        self.mean.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `<(S . u)^2>` for a real unit vector `u`.
    pub fn quadratic(&self, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                acc += u[a] * self.second[a][b] * v[b];
            }
        }
        acc
    }
}

fn apply_lowering(state: &StateVector, out: &mut [C64]) {
    let psi = &state.amplitudes;
    match state.space {
        SpaceTag::Symmetric => {
            let c = dicke_lowering(state.n_qubits());
            out[0] = ZERO;
            for k in 1..psi.len() {
                out[k] = psi[k - 1] * c[k - 1];
            }
        }
        SpaceTag::Full => {
            for (b, o) in out.iter_mut().enumerate() {
                let mut ones = b;
                let mut acc = ZERO;
                while ones != 0 {
                    acc += psi[b ^ (ones & ones.wrapping_neg())];
                    ones &= ones - 1;
                }
                *o = acc;
            }
        }
    }
}

fn apply_raising(state: &StateVector, out: &mut [C64]) {
    let psi = &state.amplitudes;
    match state.space {
        SpaceTag::Symmetric => {
            let c = dicke_lowering(state.n_qubits());
            let d = psi.len();
            for k in 0..d - 1 {
                out[k] = psi[k + 1] * c[k];
            }
            out[d - 1] = ZERO;
        }
        SpaceTag::Full => {
            let full = psi.len() - 1;
            for (b, o) in out.iter_mut().enumerate() {
                let mut zeros = !b & full;
                let mut acc = ZERO;
                while zeros != 0 {
                    acc += psi[b | (zeros & zeros.wrapping_neg())];
                    zeros &= zeros - 1;
                }
                *o = acc;
            }
        }
    }
}

/// `S^z` eigenvalue of each basis index.
fn sz_values(state: &StateVector) -> Vec<f64> {
    let n = state.n_qubits();
    let half = n as f64 / 2.0;
    match state.space {
        SpaceTag::Symmetric => (0..=n).map(|k| half - k as f64).collect(),
        SpaceTag::Full => (0..state.amplitudes.len()).map(|b| half - b.count_ones() as f64).collect(),
    }
}

pub fn spin_moments(state: &StateVector) -> SpinMoments {
    let psi = &state.amplitudes;
    let d = psi.len();
    let mut u = vec![ZERO; d];
    let mut v = vec![ZERO; d];
    apply_lowering(state, &mut u);
    apply_raising(state, &mut v);
    let w: Vec<C64> = psi.iter().zip(sz_values(state)).map(|(p, m)| p * m).collect();

    let norm2 = dot(psi, psi).re;
    let s_minus = dot(psi, &u) / norm2;
    let sz = dot(psi, &w).re / norm2;
    let sz2 = dot(&w, &w).re / norm2;
    let pm = dot(&u, &u).re / norm2; // <S+ S->
    let mp = dot(&v, &v).re / norm2; // <S- S+>
    let mm = dot(&v, &u) / norm2; // <S- S->
    let z_minus = dot(&w, &u) / norm2; // <S^z S->
    let z_plus = dot(&w, &v) / norm2; // <S^z S+>

    let sx = s_minus.re;
    let sy = -s_minus.im;
    let sx2 = (2.0 * mm.re + pm + mp) / 4.0;
    let sy2 = (-2.0 * mm.re + pm + mp) / 4.0;
    let sxy = -mm.im / 2.0;
    let sxz = ((z_plus + z_minus) / 2.0).re;
    let syz = ((z_plus - z_minus) / C64::new(0.0, 2.0)).re;
    SpinMoments {
        n: state.n_qubits(),
        mean: [sx, sy, sz],
        second: [[sx2, sxy, sxz], [sxy, sy2, syz], [sxz, syz, sz2]],
    }
}

/// `N^-1 sum_j <sigma^a_j>`.
pub fn magnetization(state: &StateVector, axis: Axis) -> f64 {
    let m = spin_moments(state);
    let i = match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    };
    2.0 * m.mean[i] / m.n as f64
}

/// `<sigma^z_j>` for every qubit.
pub fn per_qubit_z(state: &StateVector) -> Vec<f64> {
    let n = state.n_qubits();
    match state.space {
        SpaceTag::Symmetric => {
            let z = magnetization(state, Axis::Z);
            vec![z; n]
        }
        SpaceTag::Full => {
            let mut out = vec![0.0; n];
            let mut total = 0.0;
            for (b, a) in state.amplitudes.iter().enumerate() {
                let p = a.norm_sqr();
                total += p;
                for (j, o) in out.iter_mut().enumerate() {
                    if (b >> j) & 1 == 1 {
                        *o -= p;
                    } else {
                        *o += p;
                    }
                }
            }
            out.iter_mut().for_each(|v| *v /= total);
            out
        }
    }
}

/// `sum_ij <sigma^z_i sigma^z_j> / N^2`, diagonal terms included.
pub fn czz_from_moments(m: &SpinMoments) -> f64 {
    4.0 * m.second[2][2] / (m.n * m.n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{embed_symmetric, initial_state};
    use crate::linalg::ONE;

    fn plus_state(n: usize) -> StateVector {
        let d = 1usize << n;
        let a = C64::new((1.0 / d as f64).sqrt(), 0.0);
        StateVector::new(vec![a; d], SpaceTag::Full, 0.0).unwrap()
    }

    #[test]
    fn all_zeros_magnetization() {
        let s = initial_state(SpaceTag::Full, 5).unwrap();
        assert_eq!(magnetization(&s, Axis::Z), 1.0);
        assert_eq!(magnetization(&s, Axis::X), 0.0);
        assert_eq!(czz_from_moments(&spin_moments(&s)), 1.0);
    }

    #[test]
    fn plus_state_is_x_polarised() {
        let s = plus_state(4);
        assert!((magnetization(&s, Axis::X) - 1.0).abs() < 1e-14);
        assert!(magnetization(&s, Axis::Y).abs() < 1e-14);
        // Uncorrelated, unpolarised along z: only the diagonal 1/N remains.
        assert!((czz_from_moments(&spin_moments(&s)) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn symmetric_and_full_moments_agree() {
        let amps: Vec<C64> = (0..7).map(|k| C64::new((k as f64).cos(), 0.3 * k as f64)).collect();
        let mut s = StateVector::new(amps, SpaceTag::Symmetric, 0.0).unwrap();
        s.normalize().unwrap();
        let a = spin_moments(&s);
        let b = spin_moments(&embed_symmetric(&s).unwrap());
        for i in 0..3 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-12);
            for j in 0..3 {
                assert!((a.second[i][j] - b.second[i][j]).abs() < 1e-12);
            }
        }
        // Casimir of the maximal-spin sector.
        let s2 = a.second[0][0] + a.second[1][1] + a.second[2][2];
        assert!((s2 - 3.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn per_qubit_z_single_flip() {
        let mut s = initial_state(SpaceTag::Full, 3).unwrap();
        s.amplitudes[0] = crate::linalg::ZERO;
        s.amplitudes[0b010] = ONE;
        assert_eq!(per_qubit_z(&s), vec![1.0, -1.0, 1.0]);
    }
}
