//! Time evolution of pure states and the Loschmidt amplitude.

pub mod precise;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::{norm, DenseExponential, Krylov, Operator, C64, ONE, ZERO};

/// Largest dimension the dense-exponential method will materialise.
pub const DENSE_DIM_CAP: usize = 4096;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const KRYLOV_MAX_DIM: usize = 30;
const RENORMALIZE_BELOW: f64 = 1e-9;
const NORM_FAILURE_ABOVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    /// 2^N computational basis.
    Full,
    /// (N+1)-dimensional Dicke sector, index `k` holding `m = N/2 - k`.
    Symmetric,
}

impl SpaceTag {
    pub fn dim(self, n: usize) -> usize {
        match self {
            SpaceTag::Full => 1 << n,
            SpaceTag::Symmetric => n + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub space: SpaceTag,
    /// Evolution time [ns].
    pub time: f64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>, space: SpaceTag, time: f64) -> Result<Self> {
        let len = amplitudes.len();
        let ok = match space {
            SpaceTag::Full => len.is_power_of_two() && len >= 2,
            SpaceTag::Symmetric => len >= 2,
        };
        if !ok {
            return param(format!("{len} amplitudes do not form a {space:?} state"));
        }
        Ok(Self { amplitudes, space, time })
    }

    pub fn n_qubits(&self) -> usize {
        match self.space {
            SpaceTag::Full => self.amplitudes.len().trailing_zeros() as usize,
            SpaceTag::Symmetric => self.amplitudes.len() - 1,
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::Numerical("cannot normalise a zero state".into()));
        }
        self.amplitudes.iter_mut().for_each(|z| *z /= nrm);
        Ok(())
    }

    /// Overlap with the all-zeros state; index 0 in both spaces.
    pub fn loschmidt_amplitude(&self) -> C64 {
        self.amplitudes[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Krylov,
    DenseExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionPlan {
    pub t_grid: Vec<f64>,
    pub tolerance: f64,
    pub method: Method,
}

impl EvolutionPlan {
    pub fn new(t_grid: Vec<f64>, tolerance: f64, method: Method) -> Result<Self> {
        let plan = Self { t_grid, tolerance, method };
        plan.validate()?;
        Ok(plan)
    }

    /// `0, step, 2 step, ...` up to and including `t_end` (when it lands on the grid).
    pub fn uniform(t_end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(t_end >= 0.0) {
            return param("time window needs step > 0 and t_end >= 0");
        }
        let count = (t_end / step + 1e-9).floor() as usize;
        let grid = (0..=count).map(|k| k as f64 * step).collect();
        Self::new(grid, DEFAULT_TOLERANCE, Method::Krylov)
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.tolerance = tolerance;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return param("empty time grid");
        }
        if !(self.t_grid[0] >= 0.0) {
            return param("time grid must start at t >= 0");
        }
        if self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return param("time grid must be strictly increasing");
        }
        if !(self.tolerance > 0.0) {
            return param("tolerance must be positive");
        }
        Ok(())
    }
}

impl Default for EvolutionPlan {
    fn default() -> Self {
        Self::uniform(600.0, 4.0).expect("default grid is valid")
    }
}

/// `|00...0>` in the requested space.
pub fn initial_state(space: SpaceTag, n: usize) -> Result<StateVector> {
    if n < 1 {
        return param("need at least one qubit");
    }
    if space == SpaceTag::Full && n >= usize::BITS as usize - 1 {
        return Err(Error::Capacity(format!("{n} qubits cannot be indexed")));
    }
    let mut amps = vec![ZERO; space.dim(n)];
    amps[0] = ONE;
    StateVector::new(amps, space, 0.0)
}

enum Stepper {
    Krylov(Krylov),
    Dense(DenseExponential),
}

/// Lazily evaluated trajectory; yields the state at every grid time.
pub struct Evolution<'a> {
    op: &'a dyn Operator,
    state: StateVector,
    grid: Vec<f64>,
    next: usize,
    stepper: Stepper,
    failed: bool,
}

impl<'a> Evolution<'a> {
    /// Advances to the next grid time and borrows the state there.
    pub fn advance(&mut self) -> Option<Result<&StateVector>> {
        if self.failed || self.next >= self.grid.len() {
            return None;
        }
        let target = self.grid[self.next];
        self.next += 1;
        if let Err(e) = self.step_to(target) {
            self.failed = true;
            return Some(Err(e));
        }
        Some(Ok(&self.state))
    }

    fn step_to(&mut self, target: f64) -> Result<()> {
        let dt = target - self.state.time;
        if dt != 0.0 {
            match &mut self.stepper {
                Stepper::Krylov(k) => k.evolve(self.op, &mut self.state.amplitudes, dt)?,
                Stepper::Dense(d) => self.state.amplitudes = d.evolve(&self.state.amplitudes, dt),
            }
        }
        self.state.time = target;
        let drift = (self.state.norm() - 1.0).abs();
        if drift > NORM_FAILURE_ABOVE {
            return Err(Error::Numerical(format!("norm drift {drift:e} at t = {target} ns")));
        }
        if drift > 0.0 && drift < RENORMALIZE_BELOW {
            self.state.normalize()?;
        }
        Ok(())
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn into_state(self) -> StateVector {
        self.state
    }

    /// Matrix-vector products spent so far (Krylov only).
    pub fn matvecs(&self) -> usize {
        match &self.stepper {
            Stepper::Krylov(k) => k.matvecs,
            Stepper::Dense(_) => 0,
        }
    }
}

impl Iterator for Evolution<'_> {
    type Item = Result<StateVector>;

    fn next(&mut self) -> Option<Self::Item> {
        self.advance().map(|r| r.cloned())
    }
}

/// Starts a trajectory of `exp(-i H (t - state.time)) state` over the plan grid.
pub fn propagate<'a>(state: StateVector, op: &'a dyn Operator, plan: &EvolutionPlan) -> Result<Evolution<'a>> {
    plan.validate()?;
    let dim = state.amplitudes.len();
    if op.dim() != dim {
        return param(format!("operator dimension {} does not match state length {dim}", op.dim()));
    }
    let stepper = match plan.method {
        Method::Krylov => Stepper::Krylov(Krylov::new(dim, KRYLOV_MAX_DIM, plan.tolerance)),
        Method::DenseExponential => {
            if dim > DENSE_DIM_CAP {
                return Err(Error::Capacity(format!("dense exponential limited to dimension {DENSE_DIM_CAP}")));
            }
            Stepper::Dense(DenseExponential::from_operator(op))
        }
    };
    Ok(Evolution {
        op,
        state,
        grid: plan.t_grid.clone(),
        next: 0,
        stepper,
        failed: false,
    })
}

/// Evolves a single state by `dt` (negative allowed) with the Krylov propagator.
pub fn evolve_by(state: &StateVector, op: &dyn Operator, dt: f64, tolerance: f64) -> Result<StateVector> {
    let mut out = state.clone();
    let mut k = Krylov::new(out.amplitudes.len(), KRYLOV_MAX_DIM, tolerance);
    k.evolve(op, &mut out.amplitudes, dt)?;
    out.time += dt;
    Ok(out)
}

/// `(t, L(t))` for each state of a stream started from the all-zeros state.
pub fn loschmidt_echo<I>(states: I) -> Result<Vec<(f64, f64)>>
where
    I: IntoIterator<Item = Result<StateVector>>,
{
    states
        .into_iter()
        .map(|s| s.map(|s| (s.time, s.loschmidt_amplitude().norm_sqr().min(1.0))))
        .collect()
}

/// `-ln L / N`; exact zeros map to `+inf`.
pub fn rate_function(l: &[f64], n: usize) -> Vec<f64> {
    l.iter()
        .map(|&v| if v <= 0.0 { f64::INFINITY } else { -v.ln() / n as f64 })
        .collect()
}

/// Maps a Dicke-sector state into the full 2^N space.
pub fn embed_symmetric(state: &StateVector) -> Result<StateVector> {
    if state.space != SpaceTag::Symmetric {
        return param("embedding expects a symmetric-sector state");
    }
    let n = state.n_qubits();
    if n > 30 {
        return Err(Error::Capacity(format!("{n} qubits too many to embed")));
    }
    let scale: Vec<f64> = (0..=n).map(|k| 1.0 / binomial(n, k).sqrt()).collect();
    let amps = (0..1usize << n)
        .map(|b| {
            let k = b.count_ones() as usize;
            state.amplitudes[k] * scale[k]
        })
        .collect();
    StateVector::new(amps, SpaceTag::Full, state.time)
}

/// Projects a full-space state onto the Dicke sector (exact for symmetric states).
pub fn project_symmetric(state: &StateVector) -> Result<StateVector> {
    if state.space != SpaceTag::Full {
        return param("projection expects a full-space state");
    }
    let n = state.n_qubits();
    let mut c = vec![ZERO; n + 1];
    for (b, a) in state.amplitudes.iter().enumerate() {
        c[b.count_ones() as usize] += a;
    }
    for (k, ck) in c.iter_mut().enumerate() {
        *ck /= binomial(n, k).sqrt();
    }
    StateVector::new(c, SpaceTag::Symmetric, state.time)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

const DUMP_MAGIC: &[u8; 8] = b"DPTSTATE";

/// Binary dump: magic, u32 N, u8 space (0 full, 1 symmetric), f64 time,
/// then interleaved (re, im) f64 pairs, all little-endian.
pub fn write_state_dump(path: impl AsRef<Path>, state: &StateVector) -> Result<()> {
    let mut buf = Vec::with_capacity(21 + 16 * state.amplitudes.len());
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&(state.n_qubits() as u32).to_le_bytes());
    buf.push(match state.space {
        SpaceTag::Full => 0,
        SpaceTag::Symmetric => 1,
    });
    buf.extend_from_slice(&state.time.to_le_bytes());
    for z in &state.amplitudes {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_state_dump(path: impl AsRef<Path>) -> Result<StateVector> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = || Error::Config("malformed state dump".into());
    if buf.len() < 21 || &buf[..8] != DUMP_MAGIC {
        return Err(bad());
    }
    let n = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let space = match buf[12] {
        0 => SpaceTag::Full,
        1 => SpaceTag::Symmetric,
        _ => return Err(bad()),
    };
    let time = f64::from_le_bytes(buf[13..21].try_into().unwrap());
    if n > 40 {
        return Err(bad());
    }
    let dim = space.dim(n);
    let body = &buf[21..];
    if body.len() != 16 * dim {
        return Err(bad());
    }
    let amps = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    StateVector::new(amps, space, time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, Scaled};
    use crate::model::{build_full_hamiltonian, build_lmg_hamiltonian, mhz, HamiltonianModel, LmgModel};

    #[test]
    fn initial_states() {
        let s = initial_state(SpaceTag::Full, 2).unwrap();
        assert_eq!(s.amplitudes, vec![ONE, ZERO, ZERO, ZERO]);
        let s = initial_state(SpaceTag::Symmetric, 16).unwrap();
        assert_eq!(s.amplitudes.len(), 17);
        assert_eq!(s.amplitudes[0], ONE);
        assert_eq!(s.norm(), 1.0);
        assert!(initial_state(SpaceTag::Full, 0).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(EvolutionPlan::new(vec![0.0, 1.0, 1.0], 1e-10, Method::Krylov).is_err());
        assert!(EvolutionPlan::new(vec![-1.0, 1.0], 1e-10, Method::Krylov).is_err());
        assert!(EvolutionPlan::new(vec![0.0, 1.0], 0.0, Method::Krylov).is_err());
        let p = EvolutionPlan::default();
        assert_eq!(p.t_grid.len(), 151);
        assert_eq!(*p.t_grid.last().unwrap(), 600.0);
    }

    #[test]
    fn eigenstate_is_stationary() {
        let model = HamiltonianModel::uniform(6, mhz(-1.7), 0.0).unwrap();
        let h = build_full_hamiltonian(&model).unwrap();
        let plan = EvolutionPlan::uniform(100.0, 10.0).unwrap();
        let ev = propagate(initial_state(SpaceTag::Full, 6).unwrap(), &h, &plan).unwrap();
        let l = loschmidt_echo(ev).unwrap();
        assert!(l.iter().all(|&(_, v)| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn krylov_matches_dense_two_qubits() {
        let model = HamiltonianModel::uniform(2, mhz(-1.7), mhz(5.0)).unwrap();
        let h = build_full_hamiltonian(&model).unwrap();
        let plan = EvolutionPlan::uniform(200.0, 5.0).unwrap();
        let s0 = initial_state(SpaceTag::Full, 2).unwrap();
        let a: Vec<_> = propagate(s0.clone(), &h, &plan).unwrap().map(|s| s.unwrap()).collect();
        let dense = plan.clone().with_method(Method::DenseExponential);
        let b: Vec<_> = propagate(s0, &h, &dense).unwrap().map(|s| s.unwrap()).collect();
        for (x, y) in a.iter().zip(&b) {
            let f = dot(&x.amplitudes, &y.amplitudes).norm_sqr();
            assert!(f > 1.0 - 1e-10);
            // P11 lives at index 3.
            assert!((x.amplitudes[3].norm_sqr() - y.amplitudes[3].norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let h = build_lmg_hamiltonian(&LmgModel::new(20, 1.0, 0.8).unwrap());
        let s0 = initial_state(SpaceTag::Symmetric, 20).unwrap();
        let fwd = evolve_by(&s0, &h, 13.0, 1e-12).unwrap();
        let back = evolve_by(&fwd, &Scaled { inner: &h, factor: -1.0 }, 13.0, 1e-12).unwrap();
        assert!(dot(&s0.amplitudes, &back.amplitudes).norm_sqr() > 1.0 - 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let h = build_lmg_hamiltonian(&LmgModel::new(4, 1.0, 0.8).unwrap());
        let s = initial_state(SpaceTag::Symmetric, 5).unwrap();
        assert!(matches!(propagate(s, &h, &EvolutionPlan::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn rate_function_values() {
        let r = rate_function(&[1.0, (-16.0f64).exp(), 0.01, 0.0], 16);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 1.0).abs() < 1e-14);
        assert!((r[2] - 0.2878).abs() < 1e-4);
        assert!(r[3].is_infinite());
    }

    #[test]
    fn embed_then_project_round_trips() {
        let amps: Vec<C64> = (0..7).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let mut s = StateVector::new(amps, SpaceTag::Symmetric, 3.0).unwrap();
        s.normalize().unwrap();
        let full = embed_symmetric(&s).unwrap();
        assert!((full.norm() - 1.0).abs() < 1e-12);
        let back = project_symmetric(&full).unwrap();
        for (a, b) in s.amplitudes.iter().zip(&back.amplitudes) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn state_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let mut s = initial_state(SpaceTag::Full, 3).unwrap();
        s.amplitudes[5] = C64::new(0.25, -0.5);
        s.time = 12.5;
        write_state_dump(&path, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], DUMP_MAGIC);
        assert_eq!(read_state_dump(&path).unwrap(), s);
    }
}
