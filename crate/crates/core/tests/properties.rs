//! Structural invariants checked on random inputs.

use std::f64::consts::PI;

use dptsim::calib::{correct_drive, effective_drive, CrosstalkMatrix, DriveVector};
use dptsim::engine::{embed_symmetric, evolve_by, initial_state, project_symmetric, SpaceTag, StateVector};
use dptsim::linalg::{dot, hermiticity_defect, norm, to_dense, Operator, C64};
use dptsim::measure::{correct_readout, sample_shots, RotationSetting};
use dptsim::model::{build_full_hamiltonian, build_lmg_hamiltonian, DeviceSpec, HamiltonianModel, LmgModel};
use dptsim::observables::qfunc::{q_function, QMesh};
use dptsim::observables::squeezing::squeezing_parameter;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn state_from(re: &[f64], im: &[f64], space: SpaceTag) -> StateVector {
    let amps: Vec<C64> = re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect();
    let mut s = StateVector::new(amps, space, 0.0).unwrap();
    s.normalize().unwrap();
    s
}

fn coupling_matrix(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = raw[k];
            m[(j, i)] = raw[k];
            k += 1;
        }
    }
    m
}

fn random_model() -> impl Strategy<Value = HamiltonianModel> {
    (2usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n * (n - 1) / 2),
            -2.0f64..2.0,
            prop::collection::vec(0.0f64..2.0 * PI, n),
        )
            .prop_map(move |(raw, hx, phases)| {
                let mut m = HamiltonianModel::new(coupling_matrix(n, &raw), hx).unwrap();
                m.phases = phases;
                m
            })
    })
}

fn random_full_state(n: usize) -> impl Strategy<Value = StateVector> {
    let d = 1usize << n;
    (prop::collection::vec(-1.0f64..1.0, d), prop::collection::vec(-1.0f64..1.0, d))
        .prop_filter("nonzero", |(a, b)| a.iter().chain(b).any(|v| v.abs() > 1e-3))
        .prop_map(|(a, b)| state_from(&a, &b, SpaceTag::Full))
}

fn random_symmetric_state(n: usize) -> impl Strategy<Value = StateVector> {
    (prop::collection::vec(-1.0f64..1.0, n + 1), prop::collection::vec(-1.0f64..1.0, n + 1))
        .prop_filter("nonzero", |(a, b)| a.iter().chain(b).any(|v| v.abs() > 1e-3))
        .prop_map(|(a, b)| state_from(&a, &b, SpaceTag::Symmetric))
}

fn apply(op: &dyn Operator, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut y);
    y
}

fn swap_bits(psi: &[C64], i: usize, j: usize) -> Vec<C64> {
    (0..psi.len())
        .map(|b| {
            let (bi, bj) = ((b >> i) & 1, (b >> j) & 1);
            let src = if bi == bj { b } else { b ^ (1 << i) ^ (1 << j) };
            psi[src]
        })
        .collect()
}

/// Max amplitude difference after removing the global phase.
fn phase_aligned_distance(a: &[C64], b: &[C64]) -> f64 {
    let ov = dot(a, b);
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
    a.iter().zip(b).map(|(x, y)| (x * phase - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian(model in random_model()) {
        let h = build_full_hamiltonian(&model).unwrap();
        let dense = to_dense(&h);
        let scale = dense.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1.0);
        prop_assert!(hermiticity_defect(&dense) <= 1e-14 * scale);
    }

    #[test]
    fn flip_flop_conserves_excitations(model in random_model(), seed in 0usize..64) {
        let mut model = model;
        model.hx = 0.0;
        let n = model.n();
        let h = build_full_hamiltonian(&model).unwrap();
        let b0 = seed % (1 << n);
        let mut e = vec![C64::new(0.0, 0.0); 1 << n];
        e[b0] = C64::new(1.0, 0.0);
        let y = apply(&h, &e);
        for (b, v) in y.iter().enumerate() {
            if b.count_ones() != b0.count_ones() {
                prop_assert!(v.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_model_commutes_with_qubit_swaps(
        (n, psi) in (2usize..=6).prop_flat_map(|n| (Just(n), random_full_state(n))),
        lambda in -1.0f64..1.0,
        hx in 0.0f64..2.0,
        pick in 0usize..36,
    ) {
        let (i, j) = (pick % n, (pick / n) % n);
        prop_assume!(i != j);
        let h = build_full_hamiltonian(&HamiltonianModel::uniform(n, lambda, hx).unwrap()).unwrap();
        let lhs = apply(&h, &swap_bits(&psi.amplitudes, i, j));
        let rhs = swap_bits(&apply(&h, &psi.amplitudes), i, j);
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn symmetric_sector_is_closed(
        (n, sym) in (2usize..=8).prop_flat_map(|n| (Just(n), random_symmetric_state(n))),
        lambda in -1.0f64..1.0,
        hx in -1.0f64..1.0,
    ) {
        let h = build_full_hamiltonian(&HamiltonianModel::uniform(n, lambda, hx).unwrap()).unwrap();
        let full = embed_symmetric(&sym).unwrap();
        let y = StateVector::new(apply(&h, &full.amplitudes), SpaceTag::Full, 0.0).unwrap();
        let back = embed_symmetric(&project_symmetric(&y).unwrap()).unwrap();
        let leak: f64 = y.amplitudes.iter().zip(&back.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum();
        prop_assert!(leak.sqrt() <= 1e-12 * norm(&y.amplitudes).max(1.0));
    }

    #[test]
    fn dicke_and_full_trajectories_agree(
        n in 2usize..=8,
        lambda in -0.5f64..0.5,
        hx in 0.0f64..1.0,
        t in 0.1f64..20.0,
    ) {
        let full_op = build_full_hamiltonian(&HamiltonianModel::uniform(n, lambda, hx).unwrap()).unwrap();
        let dicke_op = build_lmg_hamiltonian(&LmgModel::from_uniform(n, lambda, hx).unwrap());
        let full = evolve_by(&initial_state(SpaceTag::Full, n).unwrap(), &full_op, t, 1e-12).unwrap();
        let dicke = evolve_by(&initial_state(SpaceTag::Symmetric, n).unwrap(), &dicke_op, t, 1e-12).unwrap();
        let embedded = embed_symmetric(&dicke).unwrap();
        prop_assert!(phase_aligned_distance(&embedded.amplitudes, &full.amplitudes) <= 1e-8);
        let lf = full.loschmidt_amplitude().norm_sqr();
        let ld = dicke.loschmidt_amplitude().norm_sqr();
        prop_assert!((lf - ld).abs() <= 1e-8);
    }

    #[test]
    fn time_reversal_restores_the_state(model in random_model(), t in 0.1f64..10.0) {
        let h = build_full_hamiltonian(&model).unwrap();
        let psi0 = initial_state(SpaceTag::Full, model.n()).unwrap();
        let fwd = evolve_by(&psi0, &h, t, 1e-12).unwrap();
        let back = evolve_by(&fwd, &h, -t, 1e-12).unwrap();
        let fidelity = dot(&psi0.amplitudes, &back.amplitudes).norm_sqr();
        prop_assert!(fidelity >= 1.0 - 1e-9);
    }

    #[test]
    fn q_function_integral_is_constant_on_symmetric_states(
        (n, sym) in (2usize..=8).prop_flat_map(|n| (Just(n), random_symmetric_state(n))),
    ) {
        let n_theta = 401;
        let mesh = QMesh::regular(n_theta, 2 * n + 2);
        let q = q_function(&sym, &mesh).unwrap();
        let dth = PI / (n_theta - 1) as f64;
        let dph = 2.0 * PI / mesh.phi.len() as f64;
        let mut total = 0.0;
        for (i, th) in mesh.theta.iter().enumerate() {
            // Simpson weights in theta, exact rectangle rule in phi.
            let w = if i == 0 || i == n_theta - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let np = mesh.phi.len();
            let row: f64 = q.raw[i * np..(i + 1) * np].iter().sum();
            total += w * dth / 3.0 * th.sin() * row * dph;
        }
        prop_assert!((total - 4.0 * PI / (n + 1) as f64).abs() < 1e-6);
        let embedded = q_function(&embed_symmetric(&sym).unwrap(), &mesh).unwrap();
        for (a, b) in q.raw.iter().zip(&embedded.raw) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_squeezing_matches_the_scan(
        (_n, psi) in (2usize..=7).prop_flat_map(|n| (Just(n), random_full_state(n))),
    ) {
        if let Ok(f) = squeezing_parameter(&psi) {
            prop_assert!((f.xi2_closed - f.xi2_scan).abs() <= 1e-9);
        }
    }

    #[test]
    fn crosstalk_correction_hits_the_target(
        n in 2usize..=16,
        seed in any::<u64>(),
        a_max in 0.0f64..0.06,
        amp in 0.01f64..1.0,
        phase in 0.0f64..2.0 * PI,
    ) {
        let m = CrosstalkMatrix::synthetic(n, a_max, seed);
        let desired = DriveVector::uniform(n, amp, phase);
        let applied = correct_drive(&m, &desired).unwrap();
        let got = effective_drive(&m, &applied).unwrap();
        let residual: f64 = got.0.iter().zip(&desired.0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(residual <= 1e-10 * desired.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampling_is_seed_deterministic(
        (n, psi) in (2usize..=6).prop_flat_map(|n| (Just(n), random_full_state(n))),
        seed in any::<u64>(),
        with_error in any::<bool>(),
    ) {
        let device = DeviceSpec::builtin_16q().truncated(n).unwrap();
        let settings = RotationSetting::uniform(n, 0.7, 0.3);
        let a = sample_shots(&psi, &settings, 200, seed, &device, with_error).unwrap();
        let b = sample_shots(&psi, &settings, 200, seed, &device, with_error).unwrap();
        prop_assert_eq!(&a.bitstrings, &b.bitstrings);
        let c = sample_shots(&psi, &settings, 200, seed.wrapping_add(1), &device, with_error).unwrap();
        prop_assert!(n < 2 || a.bitstrings != c.bitstrings || psi.amplitudes.iter().filter(|z| z.norm() > 0.0).count() == 1);
    }
}

/// Corrected single-qubit readout is unbiased: averaged over many seeds the
/// corrected `<sigma^z>` converges to the exact value.
#[test]
fn readout_correction_is_unbiased() {
    let n = 3;
    let device = DeviceSpec::builtin_16q().truncated(n).unwrap();
    let psi = state_from(
        &[0.6, 0.1, -0.2, 0.3, 0.05, 0.4, 0.2, -0.1],
        &[0.0, 0.2, 0.1, -0.3, 0.2, 0.0, 0.1, 0.3],
        SpaceTag::Full,
    );
    let exact = dptsim::observables::per_qubit_z(&psi);
    let shots = 20_000;
    let reps = 40;
    let mut mean = vec![0.0; n];
    for seed in 0..reps {
        let batch = sample_shots(&psi, &RotationSetting::identity(n), shots, seed, &device, true).unwrap();
        let table = correct_readout(&batch, &device).unwrap();
        for j in 0..n {
            mean[j] += table.corrected_z[j] / reps as f64;
        }
    }
    // Standard error of the mean is about 1 / (b sqrt(shots reps)) < 2e-3.
    for j in 0..n {
        assert!((mean[j] - exact[j]).abs() < 1e-2, "qubit {j}: {} vs {}", mean[j], exact[j]);
    }
}
