//! Arbitrary-precision Dicke-sector propagation for deep Loschmidt minima.
//!
//! In double precision the echo cannot resolve values below roughly 1e-30
//! (amplitude cancellation against unit-size terms), while the perimeter law
//! at large N needs minima many orders of magnitude smaller. Here the LMG
//! Hamiltonian is exponentiated by a Taylor series in binary floating point
//! with a working precision chosen from N and raised automatically when the
//! result approaches the rounding floor.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::model::LmgModel;

type F = FBig<HalfEven, 2>;

const MAX_BITS: usize = 4096;
/// Minimum drop of ln L below the running maximum for a dip to count.
const DIP_PROMINENCE: f64 = 1e-6;
/// Guard margin (in e-folds) above the rounding floor of the amplitude.
const FLOOR_MARGIN: f64 = 28.0;
const GRID_PER_PERIOD: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreciseOptions {
    /// Initial working precision; defaults to `96 + 2N` bits.
    pub bits: Option<usize>,
    /// Scan horizon; defaults to ten transverse periods.
    pub t_max: Option<f64>,
    /// Absolute time tolerance of the refined minimum.
    pub time_tol: f64,
}

impl Default for PreciseOptions {
    fn default() -> Self {
        Self {
            bits: None,
            t_max: None,
            time_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreciseMinimum {
    pub n: usize,
    /// False when no dip was found inside the horizon.
    pub dip: bool,
    pub t_min: f64,
    /// `-ln L` at the minimum.
    pub neg_log_l: f64,
    /// Working precision that produced the result.
    pub bits: usize,
}

impl PreciseMinimum {
    pub fn l_min(&self) -> f64 {
        (-self.neg_log_l).exp()
    }
}

fn lift(x: f64, bits: usize) -> F {
    F::try_from(x).expect("finite value").with_precision(bits).value()
}

#[derive(Clone)]
struct PState {
    re: Vec<F>,
    im: Vec<F>,
}

struct PreciseLmg {
    bits: usize,
    diag: Vec<F>,
    off: Vec<F>,
    norm_bound: f64,
    eps: f64,
}

enum Outcome {
    Done(PreciseMinimum),
    NeedBits,
}

impl PreciseLmg {
    fn new(lmg: &LmgModel, bits: usize) -> Self {
        let n = lmg.n;
        let nf = lift(n as f64, bits);
        let j = lift(lmg.j_coupling, bits);
        let half_mu = lift(lmg.mu / 2.0, bits);
        // -(J/N) m^2 with m = (N - 2k)/2, shifted by its midpoint J N / 8.
        let shift = lift(lmg.j_coupling * n as f64 / 8.0, bits);
        let diag: Vec<F> = (0..=n)
            .map(|k| {
                let twice_m = lift(n as f64 - 2.0 * k as f64, bits);
                let v = -(&j * &twice_m * &twice_m) / (lift(4.0, bits) * &nf);
                v + &shift
            })
            .collect();
        let off: Vec<F> = (0..n)
            .map(|k| {
                let r = lift(((k + 1) * (n - k)) as f64, bits).sqrt();
                &half_mu * r
            })
            .collect();
        let dmax = diag.iter().map(|d| d.to_f64().value().abs()).fold(0.0, f64::max);
        let omax = off.iter().map(|o| o.to_f64().value().abs()).fold(0.0, f64::max);
        Self {
            bits,
            diag,
            off,
            norm_bound: (dmax + 2.0 * omax).max(1e-300),
            eps: 2f64.powi(-(bits.min(1000) as i32)),
        }
    }

    fn apply(&self, x: &[F]) -> Vec<F> {
        let d = self.diag.len();
        (0..d)
            .map(|k| {
                let mut acc = &self.diag[k] * &x[k];
                if k > 0 {
                    acc += &self.off[k - 1] * &x[k - 1];
                }
                if k + 1 < d {
                    acc += &self.off[k] * &x[k + 1];
                }
                acc
            })
            .collect()
    }

    /// `exp(-i H tau) s` by a Taylor series, for `tau * |H|` of order one.
    fn step(&self, s: &PState, tau: f64) -> PState {
        let mut sum = s.clone();
        let mut term = s.clone();
        let scale0 = s
            .re
            .iter()
            .chain(&s.im)
            .map(|v| v.to_f64().value().abs())
            .fold(0.0, f64::max);
        for k in 1..10_000 {
            let c = lift(tau / k as f64, self.bits);
            // (-i c H)(re + i im) = c H im - i c H re
            let h_re = self.apply(&term.re);
            let h_im = self.apply(&term.im);
            term.re = h_im.into_iter().map(|v| v * &c).collect();
            term.im = h_re.into_iter().map(|v| -(v * &c)).collect();
            let mut size = 0.0f64;
            for (acc, t) in sum.re.iter_mut().zip(&term.re) {
                *acc += t;
                size = size.max(t.to_f64().value().abs());
            }
            for (acc, t) in sum.im.iter_mut().zip(&term.im) {
                *acc += t;
                size = size.max(t.to_f64().value().abs());
            }
            let remaining = (k as f64 + 1.0) > tau.abs() * self.norm_bound;
            if remaining && size <= self.eps * scale0 {
                break;
            }
        }
        sum
    }

    fn ln_echo(s: &PState) -> f64 {
        let l = &s.re[0] * &s.re[0] + &s.im[0] * &s.im[0];
        if l == F::ZERO {
            f64::NEG_INFINITY
        } else {
            l.ln().to_f64().value()
        }
    }

    fn near_floor(&self, ln_l: f64) -> bool {
        0.5 * ln_l < -(self.bits as f64) * std::f64::consts::LN_2 + FLOOR_MARGIN
    }

    fn first_minimum(&self, n: usize, mu: f64, opts: &PreciseOptions) -> Result<Outcome> {
        let period = 2.0 * std::f64::consts::PI / mu.abs();
        let t_max = opts.t_max.unwrap_or(10.0 * period);
        let dt = (1.0 / self.norm_bound).min(period / GRID_PER_PERIOD);

        let mut start = PState {
            re: (0..=n).map(|_| lift(0.0, self.bits)).collect(),
            im: (0..=n).map(|_| lift(0.0, self.bits)).collect(),
        };
        start.re[0] = lift(1.0, self.bits);

        // Last three grid samples: (t, state, ln L).
        let mut prev2: Option<(f64, PState, f64)> = None;
        let mut prev1 = (0.0, start, 0.0);
        let mut running_max = 0.0f64;
        let mut k = 0usize;
        loop {
            k += 1;
            let t = k as f64 * dt;
            if t > t_max {
                return Ok(Outcome::Done(PreciseMinimum {
                    n,
                    dip: false,
                    t_min: prev1.0,
                    neg_log_l: -prev1.2,
                    bits: self.bits,
                }));
            }
            let s = self.step(&prev1.1, dt);
            let ln_l = Self::ln_echo(&s);
            if self.near_floor(ln_l) {
                return Ok(Outcome::NeedBits);
            }
            if let Some((t0, s0, l0)) = &prev2 {
                let l1 = prev1.2;
                if l1 < *l0 && ln_l >= l1 && running_max - l1 > DIP_PROMINENCE {
                    let (t_min, ln_min) = self.refine(s0, *t0, t, opts.time_tol);
                    if self.near_floor(ln_min) {
                        return Ok(Outcome::NeedBits);
                    }
                    return Ok(Outcome::Done(PreciseMinimum {
                        n,
                        dip: true,
                        t_min,
                        neg_log_l: -ln_min,
                        bits: self.bits,
                    }));
                }
                running_max = running_max.max(*l0);
            }
            prev2 = Some(std::mem::replace(&mut prev1, (t, s, ln_l)));
        }
    }

    /// Golden-section search of ln L on `[a, b]`, evolving from the state at `a`.
    fn refine(&self, s0: &PState, a: f64, b: f64, tol: f64) -> (f64, f64) {
        let eval = |t: f64| Self::ln_echo(&self.step(s0, t - a));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (a, b);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        while hi - lo > tol {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = eval(x2);
            }
        }
        if f1 <= f2 {
            (x1, f1)
        } else {
            (x2, f2)
        }
    }
}

/// First local minimum of the echo `|<N/2|exp(-i H t)|N/2>|^2` for an LMG model.
pub fn loschmidt_first_minimum(lmg: &LmgModel, opts: &PreciseOptions) -> Result<PreciseMinimum> {
    if !(opts.time_tol > 0.0) {
        return param("time tolerance must be positive");
    }
    if lmg.mu == 0.0 {
        // |m = N/2> is an eigenstate: the echo never dips.
        return Ok(PreciseMinimum {
            n: lmg.n,
            dip: false,
            t_min: 0.0,
            neg_log_l: 0.0,
            bits: 0,
        });
    }
    let mut bits = opts.bits.unwrap_or(96 + 2 * lmg.n);
    loop {
        let engine = PreciseLmg::new(lmg, bits);
        match engine.first_minimum(lmg.n, lmg.mu, opts)? {
            Outcome::Done(m) => return Ok(m),
            Outcome::NeedBits => {
                bits *= 2;
                if bits > MAX_BITS {
                    return Err(Error::Numerical(format!(
                        "echo minimum below the {MAX_BITS}-bit rounding floor"
                    )));
                }
            }
        }
    }
}

/// Echo values at the given times, for cross-checks against double precision.
pub fn loschmidt_series(lmg: &LmgModel, times: &[f64], bits: usize) -> Vec<f64> {
    let engine = PreciseLmg::new(lmg, bits);
    let n = lmg.n;
    let mut s = PState {
        re: (0..=n).map(|_| lift(0.0, bits)).collect(),
        im: (0..=n).map(|_| lift(0.0, bits)).collect(),
    };
    s.re[0] = lift(1.0, bits);
    let mut t = 0.0;
    let max_tau = 1.0 / engine.norm_bound;
    times
        .iter()
        .map(|&target| {
            let mut remaining = target - t;
            while remaining.abs() > 0.0 {
                let tau = remaining.clamp(-max_tau, max_tau);
                s = engine.step(&s, tau);
                remaining -= tau;
            }
            t = target;
            PreciseLmg::ln_echo(&s).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{initial_state, loschmidt_echo, propagate, EvolutionPlan, SpaceTag};
    use crate::model::build_lmg_hamiltonian;

    #[test]
    fn series_matches_double_precision_where_resolvable() {
        let lmg = LmgModel::new(12, 1.0, 0.9).unwrap();
        let plan = EvolutionPlan::uniform(6.0, 0.25).unwrap().with_tolerance(1e-13).unwrap();
        let h = build_lmg_hamiltonian(&lmg);
        let ev = propagate(initial_state(SpaceTag::Symmetric, 12).unwrap(), &h, &plan).unwrap();
        let want = loschmidt_echo(ev).unwrap();
        let got = loschmidt_series(&lmg, &plan.t_grid, 128);
        for ((_, w), g) in want.iter().zip(&got) {
            assert!((w - g).abs() < 1e-11, "{w} vs {g}");
        }
    }

    #[test]
    fn single_spin_closed_form() {
        // N = 2 at J = 0: spin-1 rotation, L = cos^4(mu t / 2), first zero at pi / mu.
        let lmg = LmgModel::new(2, 0.0, 1.3).unwrap();
        let m = loschmidt_first_minimum(&lmg, &PreciseOptions::default()).unwrap();
        assert!(m.dip);
        assert!((m.t_min - std::f64::consts::PI / 1.3).abs() < 1e-6);
        assert!(m.neg_log_l > 40.0);
    }

    #[test]
    fn zero_field_has_no_dip() {
        let m = loschmidt_first_minimum(&LmgModel::new(8, 1.0, 0.0).unwrap(), &PreciseOptions::default()).unwrap();
        assert!(!m.dip);
    }
}
