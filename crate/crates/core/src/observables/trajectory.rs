//! Trajectory runner: evolves a state over a grid and records every observable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{evolve_by, propagate, rate_function, EvolutionPlan, SpaceTag, StateVector};
use crate::error::{param, Error, Result};
use crate::linalg::Operator;
use crate::model::to_mhz;
use crate::observables::loschmidt::{golden_section, loschmidt_diagnostics, LoschmidtDiagnostics, DIP_PROMINENCE, REFINE_TOL_NS};
use crate::observables::spin::{czz_from_moments, per_qubit_z, spin_moments};
use crate::observables::squeezing::squeezing_from_moments;

/// Which observables the runner evaluates besides the echo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSet {
    /// Magnetisation, Bloch length, C_zz and squeezing.
    pub moments: bool,
    pub per_qubit: bool,
}

impl ObservableSet {
    pub const ALL: Self = Self { moments: true, per_qubit: true };
    pub const ECHO_ONLY: Self = Self { moments: false, per_qubit: false };
}

impl Default for ObservableSet {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub observables: ObservableSet,
    /// Refine echo minima and the squeezing optimum between grid points.
    pub refine: bool,
    /// Keep a copy of the state at the squeezing optimum.
    pub keep_best_state: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            observables: ObservableSet::ALL,
            refine: true,
            keep_best_state: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    /// [rad/ns]
    pub hx: f64,
    /// [rad/ns]
    pub delta: f64,
    pub space: SpaceTag,
    /// [ns]
    pub t: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub bloch_len: Vec<f64>,
    pub czz: Vec<f64>,
    pub loschmidt: Vec<f64>,
    /// NaN where the mean-spin direction is undefined.
    pub xi2: Vec<f64>,
    /// `per_qubit_z[j][k]` is `<sigma^z_j>` at `t[k]`.
    pub per_qubit_z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestSqueezing {
    pub t: f64,
    pub xi2: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub record: TrajectoryRecord,
    pub diagnostics: LoschmidtDiagnostics,
    pub best: Option<BestSqueezing>,
    pub best_state: Option<StateVector>,
}

/// Runs one quench trajectory from `initial` under `op`.
pub fn run_trajectory(
    op: &dyn Operator,
    initial: StateVector,
    plan: &EvolutionPlan,
    hx: f64,
    delta: f64,
    opts: &RunOptions,
) -> Result<TrajectoryRun> {
    let n = initial.n_qubits();
    let space = initial.space;
    let obs = opts.observables;
    let mut rec = TrajectoryRecord {
        n,
        hx,
        delta,
        space,
        t: Vec::new(),
        sigma_x: Vec::new(),
        sigma_y: Vec::new(),
        sigma_z: Vec::new(),
        bloch_len: Vec::new(),
        czz: Vec::new(),
        loschmidt: Vec::new(),
        xi2: Vec::new(),
        per_qubit_z: if obs.per_qubit { vec![Vec::new(); n] } else { Vec::new() },
    };
    let mut best: Option<BestSqueezing> = None;
    let mut best_state = None;

    // States at the left end of the candidate refinement brackets.
    let mut first_bracket: Option<StateVector> = None;
    let mut global_bracket: Option<StateVector> = None;
    let mut global_min = f64::INFINITY;
    let mut running_max = f64::NEG_INFINITY;
    let mut prev: Option<StateVector> = None;
    let mut prev2: Option<StateVector> = None;
    let mut best_index = 0usize;
    let mut best_bracket: Option<StateVector> = None;

    let mut evo = propagate(initial, op, plan)?;
    while let Some(state) = evo.advance() {
        let state = state?;
        let l = state.loschmidt_amplitude().norm_sqr().min(1.0);
        rec.t.push(state.time);
        rec.loschmidt.push(l);
        if obs.moments {
            let m = spin_moments(state);
            let scale = 2.0 / n as f64;
            let (sx, sy, sz) = (m.mean[0] * scale, m.mean[1] * scale, m.mean[2] * scale);
            rec.sigma_x.push(sx);
            rec.sigma_y.push(sy);
            rec.sigma_z.push(sz);
            rec.bloch_len.push((sx * sx + sy * sy + sz * sz).sqrt());
            rec.czz.push(czz_from_moments(&m));
            let xi2 = match squeezing_from_moments(&m) {
                Ok(f) => f.xi2_closed,
                Err(Error::DegenerateDirection(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            rec.xi2.push(xi2);
            if xi2.is_finite() && best.map_or(true, |b| xi2 < b.xi2) {
                best = Some(BestSqueezing { t: state.time, xi2 });
                best_index = rec.t.len() - 1;
                best_bracket = prev.clone();
                if opts.keep_best_state {
                    best_state = Some(state.clone());
                }
            }
        }
        if obs.per_qubit {
            for (j, z) in per_qubit_z(state).into_iter().enumerate() {
                rec.per_qubit_z[j].push(z);
            }
        }

        if opts.refine || obs.moments {
            let k = rec.loschmidt.len() - 1;
            let ls = &rec.loschmidt;
            if opts.refine && k >= 2 && first_bracket.is_none() {
                let i = k - 1;
                running_max = running_max.max(ls[i - 1]);
                if ls[i] < ls[i - 1] && ls[i] < ls[k] && running_max - ls[i] > DIP_PROMINENCE {
                    first_bracket = prev2.clone();
                }
            }
            if l < global_min {
                global_min = l;
                global_bracket = prev.clone();
            }
            prev2 = prev.take();
            prev = Some(state.clone());
        }
    }

    let diagnostics = {
        let tol = plan.tolerance;
        let refine = |a: f64, b: f64| -> Result<(f64, f64)> {
            if !opts.refine {
                return Ok((a, f64::INFINITY));
            }
            let start = [&first_bracket, &global_bracket]
                .into_iter()
                .flatten()
                .find(|s| s.time == a)
                .ok_or_else(|| Error::Numerical(format!("no stored state at t = {a} ns")))?;
            golden_section(
                |t| Ok(evolve_by(start, op, t - a, tol)?.loschmidt_amplitude().norm_sqr()),
                a,
                b,
                REFINE_TOL_NS,
            )
        };
        loschmidt_diagnostics(&rec.t, &rec.loschmidt, refine)?
    };

    if opts.refine && best_index > 0 && best_index + 1 < rec.t.len() {
        if let Some(start) = &best_bracket {
            let (a, b) = (rec.t[best_index - 1], rec.t[best_index + 1]);
            let xi2_at = |t: f64| -> Result<f64> {
                let s = evolve_by(start, op, t - a, plan.tolerance)?;
                Ok(squeezing_from_moments(&spin_moments(&s)).map_or(f64::INFINITY, |f| f.xi2_closed))
            };
            let (t_opt, xi2) = golden_section(xi2_at, a, b, REFINE_TOL_NS)?;
            if best.map_or(false, |g| xi2 < g.xi2) {
                best = Some(BestSqueezing { t: t_opt, xi2 });
                if opts.keep_best_state {
                    best_state = Some(evolve_by(start, op, t_opt - a, plan.tolerance)?);
                }
            }
        }
    }

    Ok(TrajectoryRun {
        record: rec,
        diagnostics,
        best,
        best_state,
    })
}

/// Trapezoid average of `y` over `[t[0], t_f]`, interpolating the last panel.
pub fn time_average(t: &[f64], y: &[f64], t_f: f64) -> Result<f64> {
    if t.len() != y.len() || t.is_empty() {
        return param("series must be nonempty and match its time grid");
    }
    let last = *t.last().unwrap();
    if t_f > last + 1e-9 {
        return param(format!("t_f = {t_f} ns exceeds the trajectory end {last} ns"));
    }
    if t_f <= t[0] {
        return Ok(y[0]);
    }
    let mut area = 0.0;
    for k in 1..t.len() {
        let (a, b) = (t[k - 1], t[k]);
        if a >= t_f {
            break;
        }
        if b <= t_f {
            area += 0.5 * (b - a) * (y[k - 1] + y[k]);
        } else {
            let yf = y[k - 1] + (y[k] - y[k - 1]) * (t_f - a) / (b - a);
            area += 0.5 * (t_f - a) * (y[k - 1] + yf);
        }
    }
    Ok(area / (t_f - t[0]))
}

/// Time-averaged `<sigma^z>` over `[0, t_f]`.
pub fn order_parameter(rec: &TrajectoryRecord, t_f: f64) -> Result<f64> {
    if rec.sigma_z.is_empty() {
        return param("trajectory carries no magnetisation");
    }
    time_average(&rec.t, &rec.sigma_z, t_f)
}

/// Time-averaged C_zz over `[0, t_f]`; `off_diagonal` drops the `i = j` terms (`1/N`).
pub fn averaged_czz(rec: &TrajectoryRecord, t_f: f64, off_diagonal: bool) -> Result<f64> {
    if rec.czz.is_empty() {
        return param("trajectory carries no correlations");
    }
    let avg = time_average(&rec.t, &rec.czz, t_f)?;
    Ok(if off_diagonal { avg - 1.0 / rec.n as f64 } else { avg })
}

impl TrajectoryRecord {
    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t_ns", "loschmidt", "rate"].iter().map(|s| s.to_string()).collect();
        if !self.sigma_z.is_empty() {
            h.extend(["sigma_x", "sigma_y", "sigma_z", "bloch_len", "czz", "xi2"].iter().map(|s| s.to_string()));
        }
        h.extend((1..=self.per_qubit_z.len()).map(|j| format!("z_q{j}")));
        h
    }

    /// One row per time sample, columns as in [`Self::csv_header`].
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.csv_header())?;
        let rate = rate_function(&self.loschmidt, self.n);
        for k in 0..self.t.len() {
            let mut row = vec![fmt(self.t[k]), fmt(self.loschmidt[k]), fmt(rate[k])];
            if !self.sigma_z.is_empty() {
                for v in [
                    self.sigma_x[k],
                    self.sigma_y[k],
                    self.sigma_z[k],
                    self.bloch_len[k],
                    self.czz[k],
                    self.xi2[k],
                ] {
                    row.push(fmt(v));
                }
            }
            for z in &self.per_qubit_z {
                row.push(fmt(z[k]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self, run: &TrajectoryRun, t_f: f64) -> Result<serde_json::Value> {
        let op = if self.sigma_z.is_empty() { None } else { Some(order_parameter(self, t_f)?) };
        let cz = if self.czz.is_empty() { None } else { Some(averaged_czz(self, t_f, false)?) };
        Ok(serde_json::json!({
            "n_qubits": self.n,
            "hx_mhz": to_mhz(self.hx),
            "delta_mhz": to_mhz(self.delta),
            "space": self.space,
            "t_f_ns": t_f,
            "columns": self.csv_header(),
            "order_parameter": op,
            "czz_avg": cz,
            "loschmidt": run.diagnostics,
            "best_squeezing": run.best,
        }))
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::initial_state;
    use crate::model::{build_lmg_hamiltonian, LmgModel};

    #[test]
    fn constant_series_average() {
        let t = vec![0.0, 1.0, 3.0, 6.0];
        assert_eq!(time_average(&t, &[1.0; 4], 6.0).unwrap(), 1.0);
        assert!((time_average(&t, &[0.0, 1.0, 3.0, 6.0], 5.0).unwrap() - 2.5).abs() < 1e-14);
        assert!(time_average(&t, &[1.0; 4], 7.0).is_err());
    }

    #[test]
    fn echo_only_run_has_no_moments() {
        let h = build_lmg_hamiltonian(&LmgModel::new(8, 1.0, 0.8).unwrap());
        let plan = EvolutionPlan::uniform(10.0, 0.1).unwrap();
        let opts = RunOptions {
            observables: ObservableSet::ECHO_ONLY,
            ..RunOptions::default()
        };
        let run = run_trajectory(&h, initial_state(SpaceTag::Symmetric, 8).unwrap(), &plan, 0.4, -1.0, &opts).unwrap();
        assert!(run.record.sigma_z.is_empty());
        assert_eq!(run.record.loschmidt.len(), 101);
        assert_eq!(run.record.csv_header(), vec!["t_ns", "loschmidt", "rate"]);
        assert!(!run.diagnostics.no_dip);
        let i = crate::observables::loschmidt::first_dip_index(&run.record.loschmidt).unwrap();
        assert!(run.diagnostics.l_min_first <= run.record.loschmidt[i]);
    }
}
