//! Readout emulation: pre-rotations, shot sampling with readout error, and
//! the random-bipartition estimator of transverse spin correlations.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{SpaceTag, StateVector};
use crate::error::{param, Error, Result};
use crate::linalg::C64;
use crate::model::DeviceSpec;
use crate::observables::squeezing::{xi2_closed_form, SqueezingFrame};

/// Per-qubit `(theta_j, phi_j)` of `R_j = exp[-i theta (cos phi sx + sin phi sy) / 2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSetting {
    pub angles: Vec<(f64, f64)>,
}

impl RotationSetting {
    pub fn identity(n: usize) -> Self {
        Self { angles: vec![(0.0, 0.0); n] }
    }

    pub fn uniform(n: usize, theta: f64, phi: f64) -> Self {
        Self { angles: vec![(theta, phi); n] }
    }

    /// Rotation after which a z readout measures along the unit vector `axis`.
    pub fn angles_for_axis(axis: &[f64; 3]) -> (f64, f64) {
        let theta = axis[2].clamp(-1.0, 1.0).acos();
        let phi = axis[1].atan2(axis[0]);
        (theta, phi - FRAC_PI_2)
    }

    pub fn measuring_along(n: usize, axis: &[f64; 3]) -> Self {
        let (t, p) = Self::angles_for_axis(axis);
        Self::uniform(n, t, p)
    }

    pub fn n_qubits(&self) -> usize {
        self.angles.len()
    }
}

/// 2x2 matrix of the single-qubit rotation in the `(|0>, |1>)` basis.
pub fn rotation_matrix(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    let m = C64::new(0.0, -s);
    [
        [C64::new(c, 0.0), m * C64::from_polar(1.0, -phi)],
        [m * C64::from_polar(1.0, phi), C64::new(c, 0.0)],
    ]
}

pub fn apply_rotations(state: &StateVector, settings: &RotationSetting) -> Result<StateVector> {
    if state.space != SpaceTag::Full {
        return param("rotations act on full-space states only");
    }
    let n = state.n_qubits();
    if settings.n_qubits() != n {
        return param("rotation setting does not match the qubit count");
    }
    for &(t, p) in &settings.angles {
        if !t.is_finite() || !p.is_finite() {
            return param("rotation angles must be finite");
        }
    }
    let mut psi = state.amplitudes.clone();
    for (j, &(theta, phi)) in settings.angles.iter().enumerate() {
        if theta == 0.0 {
            continue;
        }
        let u = rotation_matrix(theta, phi);
        let bit = 1usize << j;
        for b in 0..psi.len() {
            if b & bit == 0 {
                let (x0, x1) = (psi[b], psi[b | bit]);
                psi[b] = u[0][0] * x0 + u[0][1] * x1;
                psi[b | bit] = u[1][0] * x0 + u[1][1] * x1;
            }
        }
    }
    StateVector::new(psi, SpaceTag::Full, state.time)
}

/// SHA-256 of the device's canonical text form.
pub fn device_fingerprint(device: &DeviceSpec) -> String {
    hex::encode(Sha256::digest(device.to_toml_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotBatch {
    pub n_qubits: usize,
    pub settings: RotationSetting,
    /// Bit `j` is the outcome of qubit `j`.
    pub bitstrings: Vec<u64>,
    pub n_shots: usize,
    pub seed: u64,
    /// Substream of `seed` the batch was drawn from.
    pub stream: u64,
    pub error_applied: bool,
    pub device_hash: String,
}

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    n_qubits: usize,
    settings: RotationSetting,
    n_shots: usize,
    seed: u64,
    stream: u64,
    error_applied: bool,
    device_hash: String,
}

impl ShotBatch {
    /// Character `j` of a row is the outcome of qubit `j`.
    pub fn format_bits(&self, shot: u64) -> String {
        (0..self.n_qubits).map(|j| if (shot >> j) & 1 == 1 { '1' } else { '0' }).collect()
    }

    /// JSON header line followed by one bitstring per line.
    pub fn write_ndjson(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = BatchHeader {
            n_qubits: self.n_qubits,
            settings: self.settings.clone(),
            n_shots: self.n_shots,
            seed: self.seed,
            stream: self.stream,
            error_applied: self.error_applied,
            device_hash: self.device_hash.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for &s in &self.bitstrings {
            writeln!(w, "{}", self.format_bits(s))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_ndjson(path: impl AsRef<Path>) -> Result<Self> {
        let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
        let first = lines.next().ok_or_else(|| Error::Config("empty shot file".into()))??;
        let h: BatchHeader = serde_json::from_str(&first)?;
        let mut bitstrings = Vec::with_capacity(h.n_shots);
        for line in lines {
            let line = line?;
            if line.len() != h.n_qubits {
                return Err(Error::Config(format!("bitstring of length {} for {} qubits", line.len(), h.n_qubits)));
            }
            let mut v = 0u64;
            for (j, c) in line.chars().enumerate() {
                match c {
                    '1' => v |= 1 << j,
                    '0' => {}
                    _ => return Err(Error::Config(format!("invalid bit {c:?}"))),
                }
            }
            bitstrings.push(v);
        }
        if bitstrings.len() != h.n_shots {
            return Err(Error::Config("shot count does not match header".into()));
        }
        Ok(Self {
            n_qubits: h.n_qubits,
            settings: h.settings,
            bitstrings,
            n_shots: h.n_shots,
            seed: h.seed,
            stream: h.stream,
            error_applied: h.error_applied,
            device_hash: h.device_hash,
        })
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws shots from `|amplitudes|^2` of an already-rotated state.
///
/// Outcomes use substream `2 stream`, readout flips `2 stream + 1`, so the
/// error-free batch is identical whether or not the flip channel is enabled.
pub fn sample_shots_stream(
    state: &StateVector,
    settings: &RotationSetting,
    n_shots: usize,
    seed: u64,
    stream: u64,
    device: &DeviceSpec,
    with_error: bool,
) -> Result<ShotBatch> {
    if state.space != SpaceTag::Full {
        return param("sampling needs a full-space state");
    }
    if n_shots == 0 {
        return param("need at least one shot");
    }
    let n = state.n_qubits();
    if n > 64 {
        return Err(Error::Capacity("bitstrings are limited to 64 qubits".into()));
    }
    if device.n_qubits != n {
        return param("device does not match the state's qubit count");
    }
    let mut cdf = Vec::with_capacity(state.amplitudes.len());
    let mut acc = 0.0;
    for a in &state.amplitudes {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let total = acc;
    let mut outcome_rng = rng_for(seed, 2 * stream);
    let mut flip_rng = rng_for(seed, 2 * stream + 1);
    let bitstrings = (0..n_shots)
        .map(|_| {
            let u: f64 = outcome_rng.gen::<f64>() * total;
            let mut b = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64;
            if with_error {
                for j in 0..n {
                    let r: f64 = flip_rng.gen();
                    let one = (b >> j) & 1 == 1;
                    let p_flip = if one { 1.0 - device.f1[j] } else { 1.0 - device.f0[j] };
                    if r < p_flip {
                        b ^= 1 << j;
                    }
                }
            }
            b
        })
        .collect();
    Ok(ShotBatch {
        n_qubits: n,
        settings: settings.clone(),
        bitstrings,
        n_shots,
        seed,
        stream,
        error_applied: with_error,
        device_hash: device_fingerprint(device),
    })
}

/// Rotates `state` by `settings`, then samples.
pub fn sample_shots(
    state: &StateVector,
    settings: &RotationSetting,
    n_shots: usize,
    seed: u64,
    device: &DeviceSpec,
    with_error: bool,
) -> Result<ShotBatch> {
    let rotated = apply_rotations(state, settings)?;
    sample_shots_stream(&rotated, settings, n_shots, seed, 0, device, with_error)
}

/// Inverts the per-qubit readout channel `z_meas = a + b z_true`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutCorrection {
    offset: Vec<f64>,
    gain: Vec<f64>,
}

impl ReadoutCorrection {
    pub fn new(device: &DeviceSpec) -> Result<Self> {
        let mut offset = Vec::with_capacity(device.n_qubits);
        let mut gain = Vec::with_capacity(device.n_qubits);
        for j in 0..device.n_qubits {
            let (f0, f1) = (device.f0[j], device.f1[j]);
            if f0 + f1 <= 1.0 {
                return Err(Error::SingularConfusion { qubit: j, sum: f0 + f1 });
            }
            offset.push(f0 - f1);
            gain.push(f0 + f1 - 1.0);
        }
        Ok(Self { offset, gain })
    }

    pub fn single(&self, j: usize, z_meas: f64) -> f64 {
        (z_meas - self.offset[j]) / self.gain[j]
    }

    /// Corrected `<z_i z_j>` from raw pair and corrected single expectations.
    pub fn pair(&self, i: usize, j: usize, zz_meas: f64, zi: f64, zj: f64) -> f64 {
        let (ai, aj, bi, bj) = (self.offset[i], self.offset[j], self.gain[i], self.gain[j]);
        (zz_meas - ai * aj - ai * bj * zj - aj * bi * zi) / (bi * bj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutTable {
    pub raw_p1: Vec<f64>,
    pub corrected_p1: Vec<f64>,
    pub raw_z: Vec<f64>,
    pub corrected_z: Vec<f64>,
}

/// Per-qubit excitation probabilities before and after confusion-matrix inversion.
pub fn correct_readout(batch: &ShotBatch, device: &DeviceSpec) -> Result<ReadoutTable> {
    let corr = ReadoutCorrection::new(device)?;
    let n = batch.n_qubits;
    let shots = batch.bitstrings.len() as f64;
    let raw_p1: Vec<f64> = (0..n)
        .map(|j| batch.bitstrings.iter().filter(|&&b| (b >> j) & 1 == 1).count() as f64 / shots)
        .collect();
    let raw_z: Vec<f64> = raw_p1.iter().map(|p| 1.0 - 2.0 * p).collect();
    let corrected_z: Vec<f64> = raw_z.iter().enumerate().map(|(j, &z)| corr.single(j, z)).collect();
    let corrected_p1 = corrected_z.iter().map(|z| (1.0 - z) / 2.0).collect();
    Ok(ReadoutTable {
        raw_p1,
        corrected_p1,
        raw_z,
        corrected_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// `(G1, G2)` with `G1` holding qubit 0.
    pub partitions: Vec<(Vec<usize>, Vec<usize>)>,
}

impl PartitionPlan {
    pub const DEFAULT_COUNT: usize = 5;

    /// `count` distinct equal bipartitions drawn uniformly without replacement.
    pub fn random(n: usize, count: usize, seed: u64) -> Result<Self> {
        if n % 2 != 0 || n < 2 {
            return param(format!("bipartitions need an even qubit count, got {n}"));
        }
        let available = crate::engine::binomial(n, n / 2) / 2.0;
        if count == 0 || count as f64 > available {
            return param(format!("cannot draw {count} distinct bipartitions of {n} qubits"));
        }
        let mut rng = rng_for(seed, u64::MAX);
        let mut seen = BTreeSet::new();
        let mut partitions = Vec::with_capacity(count);
        let mut idx: Vec<usize> = (0..n).collect();
        while partitions.len() < count {
            idx.shuffle(&mut rng);
            let mut g1: Vec<usize> = idx[..n / 2].to_vec();
            let mut g2: Vec<usize> = idx[n / 2..].to_vec();
            g1.sort_unstable();
            g2.sort_unstable();
            if !g1.contains(&0) {
                std::mem::swap(&mut g1, &mut g2);
            }
            if seen.insert(g1.clone()) {
                partitions.push((g1, g2));
            }
        }
        Ok(Self { partitions })
    }

    pub fn count(&self) -> usize {
        self.partitions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    /// Exact expectation values (infinite shots).
    Exact,
    Shots(usize),
}

/// Readout model used by the sampling path.
#[derive(Debug, Clone, Copy)]
pub struct Readout<'a> {
    pub device: &'a DeviceSpec,
    pub with_error: bool,
    pub correct: bool,
}

/// Pair `<z_a z_b>` statistics of one measurement setting.
struct SettingStats {
    /// `zz[a][b]`, symmetric, unit diagonal.
    zz: Vec<Vec<f64>>,
}

fn setting_stats(
    state: &StateVector,
    settings: &RotationSetting,
    mode: Mode,
    seed: u64,
    stream: u64,
    readout: Option<&Readout>,
) -> Result<SettingStats> {
    let n = state.n_qubits();
    let rotated = apply_rotations(state, settings)?;
    let mut z = vec![0.0; n];
    let mut zz = vec![vec![0.0; n]; n];
    let mut accumulate = |b: u64, w: f64| {
        let zs: Vec<f64> = (0..n).map(|j| if (b >> j) & 1 == 1 { -1.0 } else { 1.0 }).collect();
        for i in 0..n {
            z[i] += w * zs[i];
            for j in i + 1..n {
                zz[i][j] += w * zs[i] * zs[j];
            }
        }
    };
    match mode {
        Mode::Exact => {
            for (b, a) in rotated.amplitudes.iter().enumerate() {
                let p = a.norm_sqr();
                if p > 0.0 {
                    accumulate(b as u64, p);
                }
            }
        }
        Mode::Shots(shots) => {
            let perfect;
            let (device, with_error) = match readout {
                Some(r) => (r.device, r.with_error),
                None => {
                    perfect = DeviceSpec::new(vec![1.0; n], -1.0)?;
                    (&perfect, false)
                }
            };
            let batch = sample_shots_stream(&rotated, settings, shots, seed, stream, device, with_error)?;
            let w = 1.0 / shots as f64;
            for &b in &batch.bitstrings {
                accumulate(b, w);
            }
        }
    }
    for i in 0..n {
        zz[i][i] = 1.0;
        for j in 0..i {
            zz[i][j] = zz[j][i];
        }
    }
    if let (Mode::Shots(_), Some(r)) = (mode, readout) {
        if r.with_error && r.correct {
            let corr = ReadoutCorrection::new(r.device)?;
            let raw_z = z.clone();
            for j in 0..n {
                z[j] = corr.single(j, raw_z[j]);
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        zz[i][j] = corr.pair(i, j, zz[i][j], z[i], z[j]);
                    }
                }
            }
        }
    }
    Ok(SettingStats { zz })
}

/// Per-qubit rotation measuring `G1` along `u` and `G2` along `v`.
fn split_setting(n: usize, g1: &[usize], u: &[f64; 3], v: &[f64; 3]) -> RotationSetting {
    let (au, av) = (RotationSetting::angles_for_axis(u), RotationSetting::angles_for_axis(v));
    let mut angles = vec![av; n];
    for &a in g1 {
        angles[a] = au;
    }
    RotationSetting { angles }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnticommutatorEstimate {
    /// Estimate of `<{S^{n1}, S^{n2}}>`.
    pub value: f64,
    /// `(P_{n1 n2}, P_{n2 n1})` per partition.
    pub contributions: Vec<(f64, f64)>,
}

/// Random-bipartition estimator of `<{S^{n1}, S^{n2}}>`.
///
/// The cross-group sums `P^i` cover half of the ordered qubit pairs; the
/// factor `N (N - 1) / ((N/2)^2 count)` rescales them to all ordered pairs of
/// `sigma` operators, and the extra `1/4` converts Pauli to spin operators.
pub fn estimate_anticommutator(
    state: &StateVector,
    frame: &SqueezingFrame,
    plan: &PartitionPlan,
    mode: Mode,
    seed: u64,
    readout: Option<&Readout>,
) -> Result<AnticommutatorEstimate> {
    let n = state.n_qubits();
    if n % 2 != 0 {
        return param(format!("estimator needs an even qubit count, got {n}"));
    }
    let contributions = plan
        .partitions
        .par_iter()
        .enumerate()
        .map(|(i, (g1, g2))| {
            let cross = |u: &[f64; 3], v: &[f64; 3], stream: u64| -> Result<f64> {
                let s = setting_stats(state, &split_setting(n, g1, u, v), mode, seed, stream, readout)?;
                Ok(g1.iter().map(|&a| g2.iter().map(|&b| s.zz[a][b]).sum::<f64>()).sum())
            };
            let p12 = cross(&frame.n1, &frame.n2, 2 * i as u64)?;
            let p21 = cross(&frame.n2, &frame.n1, 2 * i as u64 + 1)?;
            Ok((p12, p21))
        })
        .collect::<Result<Vec<_>>>()?;
    let half = (n / 2) as f64;
    let prefactor = (n * (n - 1)) as f64 / (half * half * plan.count() as f64) / 4.0;
    let value = prefactor * contributions.iter().map(|(a, b)| a + b).sum::<f64>();
    Ok(AnticommutatorEstimate { value, contributions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Xi2Estimate {
    pub xi2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub anticommutator: AnticommutatorEstimate,
}

/// `<(S^u)^2>` from a uniform setting along `u`.
fn second_moment(
    state: &StateVector,
    u: &[f64; 3],
    mode: Mode,
    seed: u64,
    stream: u64,
    readout: Option<&Readout>,
) -> Result<f64> {
    let n = state.n_qubits();
    let s = setting_stats(state, &RotationSetting::measuring_along(n, u), mode, seed, stream, readout)?;
    Ok(s.zz.iter().flatten().sum::<f64>() / 4.0)
}

/// Squeezing parameter assembled from measured moments in `frame`.
pub fn estimate_xi2_from_shots(
    state: &StateVector,
    frame: &SqueezingFrame,
    plan: &PartitionPlan,
    mode: Mode,
    seed: u64,
    readout: Option<&Readout>,
) -> Result<Xi2Estimate> {
    let n = state.n_qubits();
    let base = 2 * plan.count() as u64;
    let a = second_moment(state, &frame.n1, mode, seed, base, readout)?;
    let b = second_moment(state, &frame.n2, mode, seed, base + 1, readout)?;
    let anticommutator = estimate_anticommutator(state, frame, plan, mode, seed, readout)?;
    let c = anticommutator.value;
    Ok(Xi2Estimate {
        xi2: xi2_closed_form(n, a, b, c),
        a,
        b,
        c,
        anticommutator,
    })
}

/// Embeds a symmetric state if necessary; sampling always runs in full space.
pub fn to_full_space(state: &StateVector) -> Result<StateVector> {
    match state.space {
        SpaceTag::Full => Ok(state.clone()),
        SpaceTag::Symmetric => crate::engine::embed_symmetric(state),
    }
}

/// Mean and sample standard deviation.
pub fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Mean and standard error of the mean.
pub fn mean_and_standard_error(v: &[f64]) -> (f64, f64) {
    let (m, s) = mean_and_std(v);
    (m, s / (v.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::initial_state;
    use crate::observables::spin::{magnetization, Axis};
    use crate::observables::squeezing::squeezing_parameter;

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1usize << n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let mut s = StateVector::new(amps, SpaceTag::Full, 0.0).unwrap();
        s.normalize().unwrap();
        s
    }

    #[test]
    fn identity_rotation_is_noop() {
        let s = random_state(3, 1);
        assert_eq!(apply_rotations(&s, &RotationSetting::identity(3)).unwrap(), s);
    }

    #[test]
    fn quarter_turn_about_minus_y_reads_x() {
        let s = random_state(4, 2);
        let r = apply_rotations(&s, &RotationSetting::uniform(4, FRAC_PI_2, -FRAC_PI_2)).unwrap();
        assert!((magnetization(&r, Axis::Z) - magnetization(&s, Axis::X)).abs() < 1e-12);
    }

    #[test]
    fn two_half_turns_are_identity_up_to_phase() {
        let s = random_state(3, 3);
        let set = RotationSetting::uniform(3, std::f64::consts::PI, 0.7);
        let r = apply_rotations(&apply_rotations(&s, &set).unwrap(), &set).unwrap();
        let ov = crate::linalg::dot(&s.amplitudes, &r.amplitudes).norm();
        assert!((ov - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_without_error_reads_zeros() {
        let s = initial_state(SpaceTag::Full, 4).unwrap();
        let dev = DeviceSpec::new(vec![0.1; 4], -1.0).unwrap();
        let b = sample_shots(&s, &RotationSetting::identity(4), 500, 9, &dev, false).unwrap();
        assert!(b.bitstrings.iter().all(|&x| x == 0));
        assert_eq!(b.n_shots, 500);
    }

    #[test]
    fn error_channel_off_matches_perfect_fidelity() {
        let s = random_state(3, 4);
        let dev = DeviceSpec::new(vec![0.1; 3], -1.0).unwrap();
        let id = RotationSetting::identity(3);
        let a = sample_shots(&s, &id, 300, 5, &dev, false).unwrap();
        let b = sample_shots(&s, &id, 300, 5, &dev, true).unwrap();
        assert_eq!(a.bitstrings, b.bitstrings);
    }

    #[test]
    fn singular_confusion_is_refused() {
        let mut dev = DeviceSpec::new(vec![0.1; 2], -1.0).unwrap();
        dev.f0[1] = 0.5;
        dev.f1[1] = 0.5;
        assert!(matches!(ReadoutCorrection::new(&dev), Err(Error::SingularConfusion { qubit: 1, .. })));
    }

    #[test]
    fn ndjson_round_trip() {
        let s = random_state(3, 6);
        let dev = DeviceSpec::new(vec![0.1; 3], -1.0).unwrap();
        let b = sample_shots(&s, &RotationSetting::uniform(3, 0.3, 0.2), 50, 1, &dev, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.ndjson");
        b.write_ndjson(&p).unwrap();
        assert_eq!(ShotBatch::read_ndjson(&p).unwrap(), b);
    }

    #[test]
    fn partitions_are_distinct_and_balanced() {
        let p = PartitionPlan::random(16, 5, 11).unwrap();
        assert_eq!(p.count(), 5);
        let firsts: BTreeSet<_> = p.partitions.iter().map(|(g1, _)| g1.clone()).collect();
        assert_eq!(firsts.len(), 5);
        for (g1, g2) in &p.partitions {
            assert_eq!(g1.len(), 8);
            assert_eq!(g2.len(), 8);
            assert!(g1.iter().all(|q| !g2.contains(q)));
        }
        assert!(PartitionPlan::random(5, 1, 0).is_err());
        assert!(PartitionPlan::random(4, 4, 0).is_err());
    }

    #[test]
    fn vacuum_transverse_correlations_vanish() {
        // |0...0> has no transverse correlations; use a tilted frame so both axes are transverse.
        let n = 6;
        let s = initial_state(SpaceTag::Full, n).unwrap();
        let f = squeezing_parameter(&s).unwrap();
        let plan = PartitionPlan::random(n, 3, 2).unwrap();
        let e = estimate_anticommutator(&s, &f, &plan, Mode::Exact, 0, None).unwrap();
        assert!(e.value.abs() < 1e-12);
        let sampled = estimate_anticommutator(&s, &f, &plan, Mode::Shots(4000), 7, None).unwrap();
        assert!(sampled.value.abs() < 0.3);
    }

    #[test]
    fn standard_error_scales_with_repetitions() {
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        let (m, se) = mean_and_standard_error(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }
}
