//! Subcommand implementations. Each returns the files it wrote (relative to
//! the output directory) and per-run timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{Command, Engine, Inputs, ScenarioSpec};
use super::{FileKind, Timing};
use crate::calib::{correct_drive, effective_drive, uniformity_check, CrosstalkMatrix, DriveVector};
use crate::calib::{DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL};
use crate::engine::{evolve_by, initial_state, EvolutionPlan, SpaceTag, StateVector};
use crate::error::{Error, Result};
use crate::linalg::Operator;
use crate::measure::{estimate_xi2_from_shots, mean_and_standard_error, Mode, PartitionPlan, Readout};
use crate::model::{
    build_full_hamiltonian, build_lmg_hamiltonian, mhz, predict_critical_field, to_mhz, DeviceSpec,
    HamiltonianModel, LmgModel,
};
use crate::observables::squeezing::squeezing_parameter;
use crate::observables::sweep::{
    crossover_bracket, power_law_exponent, squeezing_optimum_per_size, squeezing_window_end, SweepRow,
};
use crate::observables::trajectory::{averaged_czz, order_parameter, ObservableSet, RunOptions, TrajectoryRun};
use crate::observables::{perimeter_law_fit, q_function, run_trajectory, squeezing_sweep, QMesh};

/// Order-parameter thresholds of the crossover bracket.
pub const CROSSOVER_UPPER: f64 = 0.2;
pub const CROSSOVER_LOWER: f64 = 0.1;

pub struct Outcome {
    pub files: Vec<(String, FileKind)>,
    pub timings: Vec<Timing>,
}

pub fn execute(cmd: Command, spec: &ScenarioSpec, inputs: &Inputs) -> Result<Outcome> {
    fs::create_dir_all(&spec.output)?;
    let ctx = Ctx {
        spec,
        device: inputs.device()?,
        dir: spec.output.clone(),
    };
    match cmd {
        Command::Quench => quench(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Loschmidt => loschmidt(&ctx),
        Command::Squeeze => squeeze(&ctx),
        Command::Qfunc => qfunc(&ctx),
        Command::Sample => sample(&ctx),
        Command::Scaling => scaling(&ctx),
        Command::CalibCheck => calib_check(&ctx, inputs.crosstalk()?),
    }
}

struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    device: DeviceSpec,
    dir: PathBuf,
}

/// One (detuning, field) pair in MHz.
#[derive(Debug, Clone, Copy)]
struct Point {
    delta_mhz: f64,
    hx_mhz: f64,
}

impl Point {
    fn tag(&self) -> String {
        format!("d{}_hx{}", tag(self.delta_mhz), tag(self.hx_mhz))
    }
}

fn tag(v: f64) -> String {
    format!("{v:.3}").replace('-', "m").replace('.', "p")
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn db(xi2: f64) -> f64 {
    10.0 * xi2.log10()
}

/// Runs `f` writing to a temporary sibling of `path`, then renames it into place.
pub(crate) fn atomic_write(path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    match f(&tmp) {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

impl Ctx<'_> {
    fn points(&self) -> Vec<Point> {
        let mut hx = self.spec.hx_mhz.clone();
        hx.sort_by(f64::total_cmp);
        hx.dedup();
        self.spec
            .detunings(&self.device)
            .into_iter()
            .flat_map(|d| hx.iter().map(move |&h| Point { delta_mhz: d, hx_mhz: h }))
            .collect()
    }

    fn table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(String, FileKind)> {
        atomic_write(&self.dir.join(name), |p| {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })?;
        Ok((name.to_string(), FileKind::Csv))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(String, FileKind)> {
        atomic_write(&self.dir.join(name), |p| {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            Ok(fs::write(p, text)?)
        })?;
        Ok((name.to_string(), FileKind::Json))
    }

    /// Coupling model at `p` and its predicted critical field [rad/ns].
    fn model(&self, p: Point) -> Result<(HamiltonianModel, f64)> {
        let device = self.device.clone().with_delta(mhz(p.delta_mhz));
        device.validate()?;
        let hx = mhz(p.hx_mhz);
        let model = if self.spec.uniform {
            let lambda = match self.spec.lambda_mhz {
                Some(l) => mhz(l),
                None => HamiltonianModel::from_device(&device, hx)?.mean_coupling(),
            };
            HamiltonianModel::uniform(self.spec.n_qubits.unwrap_or(device.n_qubits), lambda, hx)?
        } else {
            HamiltonianModel::from_device(&device, hx)?
        };
        let hx_c = predict_critical_field(&model)?.hx_c;
        Ok((model, hx_c))
    }

    fn operator(&self, model: &HamiltonianModel) -> Result<(Box<dyn Operator>, StateVector)> {
        let n = model.n();
        Ok(match self.spec.engine {
            Engine::Full => (Box::new(build_full_hamiltonian(model)?), initial_state(SpaceTag::Full, n)?),
            Engine::Dicke => {
                let lmg = LmgModel::from_uniform(n, model.mean_coupling(), model.hx)?;
                (Box::new(build_lmg_hamiltonian(&lmg)), initial_state(SpaceTag::Symmetric, n)?)
            }
        })
    }

    fn plan(&self) -> Result<EvolutionPlan> {
        EvolutionPlan::uniform(self.spec.t_end_ns, self.spec.t_step_ns)?.with_tolerance(self.spec.tolerance)
    }

    fn trajectory(&self, p: Point, observables: ObservableSet) -> Result<(TrajectoryRun, f64)> {
        let (model, hx_c) = self.model(p)?;
        let (op, psi0) = self.operator(&model)?;
        let opts = RunOptions {
            observables,
            ..RunOptions::default()
        };
        let run = run_trajectory(op.as_ref(), psi0, &self.plan()?, mhz(p.hx_mhz), mhz(p.delta_mhz), &opts)?;
        Ok((run, hx_c))
    }

    /// Runs every point in the worker pool, keeping input order.
    fn par_points<T: Send>(&self, f: impl Fn(Point) -> Result<T> + Sync + Send) -> Result<Vec<(Point, T, Timing)>> {
        self.points()
            .into_par_iter()
            .map(|p| {
                let start = Instant::now();
                let out = f(p)?;
                let timing = Timing {
                    label: p.tag(),
                    seconds: start.elapsed().as_secs_f64(),
                };
                Ok((p, out, timing))
            })
            .collect()
    }
}

fn split<T>(results: Vec<(Point, T, Timing)>) -> (Vec<(Point, T)>, Vec<Timing>) {
    let mut timings = Vec::new();
    let pairs = results
        .into_iter()
        .map(|(p, t, tm)| {
            timings.push(tm);
            (p, t)
        })
        .collect();
    (pairs, timings)
}

fn quench(ctx: &Ctx) -> Result<Outcome> {
    let obs = ctx.spec.observable_set();
    let t_avg = ctx.spec.t_avg();
    let results = ctx.par_points(|p| {
        let (run, _) = ctx.trajectory(p, obs)?;
        let csv_name = format!("traj_{}.csv", p.tag());
        atomic_write(&ctx.dir.join(&csv_name), |path| run.record.write_csv(path))?;
        let json_name = format!("traj_{}.json", p.tag());
        let sidecar = run.record.sidecar(&run, t_avg)?;
        ctx.json(&json_name, &sidecar)?;
        Ok(vec![(csv_name, FileKind::Csv), (json_name, FileKind::Json)])
    })?;
    let (pairs, timings) = split(results);
    Ok(Outcome {
        files: pairs.into_iter().flat_map(|(_, f)| f).collect(),
        timings,
    })
}

struct SweepPoint {
    hx_c: f64,
    op: Option<f64>,
    czz: Option<f64>,
    l_first: f64,
    t_first: f64,
    l_global: f64,
    t_global: f64,
    no_dip: bool,
    xi2_min: Option<(f64, f64)>,
    window_end: Option<f64>,
}

fn sweep_point(ctx: &Ctx, p: Point, obs: ObservableSet) -> Result<SweepPoint> {
    let (run, hx_c) = ctx.trajectory(p, obs)?;
    let t_avg = ctx.spec.t_avg();
    let rec = &run.record;
    let d = run.diagnostics;
    Ok(SweepPoint {
        hx_c,
        op: if obs.moments { Some(order_parameter(rec, t_avg)?) } else { None },
        czz: if obs.moments { Some(averaged_czz(rec, t_avg, false)?) } else { None },
        l_first: d.l_min_first,
        t_first: d.t_min_first,
        l_global: d.l_min_global,
        t_global: d.t_min_global,
        no_dip: d.no_dip,
        xi2_min: run.best.map(|b| (b.xi2, b.t)),
        window_end: if obs.moments { squeezing_window_end(&rec.t, &rec.xi2) } else { None },
    })
}

#[derive(Serialize)]
struct DetuningSummary {
    delta_mhz: f64,
    hx_c_mhz: f64,
    /// Crossover bracket [MHz], from the last field with |order| > upper to the first with |order| < lower.
    crossover_mhz: Option<(f64, f64)>,
    crossover_normalized: Option<(f64, f64)>,
    squeezing: Option<crate::observables::sweep::SqueezingSweep>,
}

fn by_detuning<T>(pairs: &[(Point, T)]) -> BTreeMap<String, (f64, Vec<(Point, &T)>)> {
    let mut m: BTreeMap<String, (f64, Vec<(Point, &T)>)> = BTreeMap::new();
    for (p, t) in pairs {
        m.entry(format!("{:020.6}", p.delta_mhz + 1e6))
            .or_insert_with(|| (p.delta_mhz, Vec::new()))
            .1
            .push((*p, t));
    }
    m
}

fn sweep(ctx: &Ctx) -> Result<Outcome> {
    let obs = ObservableSet {
        per_qubit: false,
        ..ctx.spec.observable_set()
    };
    let (pairs, timings) = split(ctx.par_points(|p| sweep_point(ctx, p, obs))?);
    let norm = |p: &Point, s: &SweepPoint| p.hx_mhz / to_mhz(s.hx_c);
    let base = |p: &Point, s: &SweepPoint| vec![num(p.delta_mhz), num(p.hx_mhz), num(norm(p, s))];
    let mut files = Vec::new();

    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|(p, s)| {
            let mut r = base(p, s);
            r.extend([num(s.l_first), num(s.t_first), num(s.l_global), num(s.t_global), s.no_dip.to_string()]);
            r
        })
        .collect();
    files.push(ctx.table(
        "loschmidt_minima.csv",
        &["delta_mhz", "hx_mhz", "hx_over_hxc", "value", "t_ns", "l_min_global", "t_min_global_ns", "no_dip"],
        &rows,
    )?);

    let mut summaries = Vec::new();
    if obs.moments {
        let col = |f: &dyn Fn(&SweepPoint) -> Option<f64>| -> Vec<Vec<String>> {
            pairs
                .iter()
                .map(|(p, s)| {
                    let mut r = base(p, s);
                    r.push(num(f(s).unwrap_or(f64::NAN)));
                    r
                })
                .collect()
        };
        let header = ["delta_mhz", "hx_mhz", "hx_over_hxc", "value"];
        files.push(ctx.table("order_parameter.csv", &header, &col(&|s| s.op))?);
        files.push(ctx.table("czz.csv", &header, &col(&|s| s.czz))?);
        let normalized: Vec<Vec<String>> = pairs
            .iter()
            .map(|(p, s)| vec![num(p.delta_mhz), num(norm(p, s)), num(s.op.unwrap_or(f64::NAN))])
            .collect();
        files.push(ctx.table("order_parameter_normalized.csv", &["delta_mhz", "hx_over_hxc", "value"], &normalized)?);
        let sq: Vec<Vec<String>> = pairs
            .iter()
            .map(|(p, s)| {
                let (x, t) = s.xi2_min.unwrap_or((f64::NAN, f64::NAN));
                let mut r = base(p, s);
                r.extend([num(x), num(db(x)), num(t), num(s.window_end.unwrap_or(f64::NAN))]);
                r
            })
            .collect();
        files.push(ctx.table(
            "squeezing.csv",
            &["delta_mhz", "hx_mhz", "hx_over_hxc", "value", "value_db", "t_ns", "window_end_ns"],
            &sq,
        )?);

        for (_, (delta, group)) in by_detuning(&pairs) {
            let fields: Vec<f64> = group.iter().map(|(p, _)| p.hx_mhz).collect();
            let ops: Vec<f64> = group.iter().map(|(_, s)| s.op.unwrap_or(f64::NAN)).collect();
            let hx_c_mhz = to_mhz(group[0].1.hx_c);
            let crossover = crossover_bracket(&fields, &ops, CROSSOVER_UPPER, CROSSOVER_LOWER);
            let rows: Vec<SweepRow> = group
                .iter()
                .filter_map(|(p, s)| s.xi2_min.map(|(x, t)| SweepRow { hx: p.hx_mhz, xi2_min: x, t_opt: t }))
                .collect();
            summaries.push(DetuningSummary {
                delta_mhz: delta,
                hx_c_mhz,
                crossover_mhz: crossover,
                crossover_normalized: crossover.map(|(a, b)| (a / hx_c_mhz, b / hx_c_mhz)),
                squeezing: if rows.is_empty() { None } else { Some(squeezing_sweep(&rows)?) },
            });
        }
    }
    files.push(ctx.json("sweep_summary.json", &summaries)?);
    Ok(Outcome { files, timings })
}

fn loschmidt(ctx: &Ctx) -> Result<Outcome> {
    let results = ctx.par_points(|p| {
        let (run, hx_c) = ctx.trajectory(p, ObservableSet::ECHO_ONLY)?;
        let name = format!("echo_{}.csv", p.tag());
        atomic_write(&ctx.dir.join(&name), |path| run.record.write_csv(path))?;
        Ok((name, run.diagnostics, hx_c))
    })?;
    let (pairs, timings) = split(results);
    let mut files: Vec<(String, FileKind)> = pairs.iter().map(|(_, (f, _, _))| (f.clone(), FileKind::Csv)).collect();
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|(p, (_, d, hx_c))| {
            vec![
                num(p.delta_mhz),
                num(p.hx_mhz),
                num(p.hx_mhz / to_mhz(*hx_c)),
                num(d.l_min_first),
                num(d.t_min_first),
                num(d.l_min_global),
                num(d.t_min_global),
                d.no_dip.to_string(),
            ]
        })
        .collect();
    files.push(ctx.table(
        "loschmidt_minima.csv",
        &["delta_mhz", "hx_mhz", "hx_over_hxc", "value", "t_ns", "l_min_global", "t_min_global_ns", "no_dip"],
        &rows,
    )?);
    Ok(Outcome { files, timings })
}

fn squeeze(ctx: &Ctx) -> Result<Outcome> {
    let obs = ObservableSet {
        moments: true,
        per_qubit: false,
    };
    let results = ctx.par_points(|p| {
        let (run, hx_c) = ctx.trajectory(p, obs)?;
        let rec = &run.record;
        let name = format!("squeezing_{}.csv", p.tag());
        let rows: Vec<Vec<String>> =
            (0..rec.t.len()).map(|k| vec![num(rec.t[k]), num(rec.xi2[k]), num(db(rec.xi2[k]))]).collect();
        ctx.table(&name, &["t_ns", "xi2", "xi2_db"], &rows)?;
        Ok((name, run.best, squeezing_window_end(&rec.t, &rec.xi2), hx_c))
    })?;
    let (pairs, timings) = split(results);
    let mut files: Vec<(String, FileKind)> = pairs.iter().map(|(_, r)| (r.0.clone(), FileKind::Csv)).collect();
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|(p, (_, best, w, hx_c))| {
            let (x, t) = best.map_or((f64::NAN, f64::NAN), |b| (b.xi2, b.t));
            vec![
                num(p.delta_mhz),
                num(p.hx_mhz),
                num(p.hx_mhz / to_mhz(*hx_c)),
                num(x),
                num(db(x)),
                num(t),
                num(w.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    files.push(ctx.table(
        "squeezing.csv",
        &["delta_mhz", "hx_mhz", "hx_over_hxc", "value", "value_db", "t_ns", "window_end_ns"],
        &rows,
    )?);
    let mut summaries = Vec::new();
    for (_, (delta, group)) in by_detuning(&pairs) {
        let rows: Vec<SweepRow> = group
            .iter()
            .filter_map(|(p, r)| r.1.map(|b| SweepRow { hx: p.hx_mhz, xi2_min: b.xi2, t_opt: b.t }))
            .collect();
        if !rows.is_empty() {
            summaries.push(serde_json::json!({ "delta_mhz": delta, "sweep": squeezing_sweep(&rows)? }));
        }
    }
    files.push(ctx.json("squeezing_summary.json", &summaries)?);
    Ok(Outcome { files, timings })
}

/// States of one quench at the requested (ascending) times.
fn states_at(ctx: &Ctx, p: Point, times: &[f64], engine: Engine) -> Result<Vec<StateVector>> {
    let (model, _) = ctx.model(p)?;
    let (op, mut psi) = match engine {
        Engine::Full => (
            Box::new(build_full_hamiltonian(&model)?) as Box<dyn Operator>,
            initial_state(SpaceTag::Full, model.n())?,
        ),
        Engine::Dicke => ctx.operator(&model)?,
    };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < psi.time {
            return Err(Error::Config(format!("times must be ascending, got {t} after {}", psi.time)));
        }
        psi = evolve_by(&psi, op.as_ref(), t - psi.time, ctx.spec.tolerance)?;
        out.push(psi.clone());
    }
    Ok(out)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn qfunc(ctx: &Ctx) -> Result<Outcome> {
    let times = sorted(&ctx.spec.q_times_ns);
    let mesh = QMesh::regular(ctx.spec.q_theta, ctx.spec.q_phi);
    let results = ctx.par_points(|p| {
        let states = states_at(ctx, p, &times, ctx.spec.engine)?;
        let mut names = Vec::new();
        for s in &states {
            let name = format!("qfunc_{}_t{}.csv", p.tag(), tag(s.time));
            let field = q_function(s, &mesh)?;
            atomic_write(&ctx.dir.join(&name), |path| field.write_csv(path))?;
            names.push((s.time, name));
        }
        Ok(names)
    })?;
    let (pairs, timings) = split(results);
    let mut files = Vec::new();
    let mut index = Vec::new();
    for (p, names) in &pairs {
        for (t, name) in names {
            files.push((name.clone(), FileKind::Csv));
            index.push(vec![num(p.delta_mhz), num(p.hx_mhz), num(*t), name.clone()]);
        }
    }
    files.push(ctx.table("qfunc_index.csv", &["delta_mhz", "hx_mhz", "t_ns", "file"], &index)?);
    Ok(Outcome { files, timings })
}

fn sample(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec;
    let times = sorted(&spec.sample_times_ns);
    let mode = if spec.shots == 0 { Mode::Exact } else { Mode::Shots(spec.shots) };
    let results = ctx.par_points(|p| {
        let n = ctx.model(p)?.0.n();
        let device = ctx.device.truncated(n)?.with_delta(mhz(p.delta_mhz));
        let readout = Readout {
            device: &device,
            with_error: spec.readout_error,
            correct: spec.correct_readout,
        };
        let mut rows = Vec::new();
        for state in states_at(ctx, p, &times, Engine::Full)? {
            let frame = squeezing_parameter(&state)?;
            let mut xi2 = Vec::with_capacity(spec.repetitions);
            let mut c = Vec::with_capacity(spec.repetitions);
            for r in 0..spec.repetitions as u64 {
                let seed = spec.seed.wrapping_add(r);
                let plan = PartitionPlan::random(state.n_qubits(), spec.partitions, seed)?;
                let est = estimate_xi2_from_shots(&state, &frame, &plan, mode, seed, Some(&readout))?;
                xi2.push(est.xi2);
                c.push(est.c);
            }
            let (xi2_est, xi2_err) = mean_and_standard_error(&xi2);
            let (c_est, c_err) = mean_and_standard_error(&c);
            rows.push(SampleRow {
                t: state.time,
                xi2_exact: frame.xi2_closed,
                xi2_est,
                xi2_err,
                c_exact: frame.c,
                c_est,
                c_err,
            });
        }
        Ok(rows)
    })?;
    let (pairs, timings) = split(results);
    let mut table = Vec::new();
    let (mut within, mut total) = (0usize, 0usize);
    for (p, rows) in &pairs {
        for r in rows {
            let ok = (r.xi2_est - r.xi2_exact).abs() <= 2.0 * r.xi2_err;
            within += ok as usize;
            total += 1;
            table.push(vec![
                num(p.delta_mhz),
                num(p.hx_mhz),
                num(r.t),
                num(r.xi2_exact),
                num(r.xi2_est),
                num(r.xi2_err),
                num(r.c_exact),
                num(r.c_est),
                num(r.c_err),
                ok.to_string(),
            ]);
        }
    }
    let files = vec![
        ctx.table(
            "sampling.csv",
            &[
                "delta_mhz",
                "hx_mhz",
                "t_ns",
                "xi2_exact",
                "value",
                "value_err",
                "anticomm_exact",
                "anticomm_est",
                "anticomm_err",
                "within_2err",
            ],
            &table,
        )?,
        ctx.json(
            "sampling_summary.json",
            &serde_json::json!({
                "rows": total,
                "within_2err": within,
                "fraction_within_2err": if total > 0 { within as f64 / total as f64 } else { f64::NAN },
                "shots": spec.shots,
                "repetitions": spec.repetitions,
            }),
        )?,
    ];
    Ok(Outcome { files, timings })
}

struct SampleRow {
    t: f64,
    xi2_exact: f64,
    xi2_est: f64,
    xi2_err: f64,
    c_exact: f64,
    c_est: f64,
    c_err: f64,
}

fn scaling(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec;
    let mut timings = Vec::new();
    let start = Instant::now();
    let fits = spec
        .g_over_j
        .par_iter()
        .map(|&g| Ok((g, perimeter_law_fit(&spec.sizes, g, 1.0)?)))
        .collect::<Result<Vec<_>>>()?;
    timings.push(Timing {
        label: "perimeter".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut points = Vec::new();
    let mut fit_rows = Vec::new();
    for (g, (pts, fit)) in &fits {
        for m in pts {
            points.push(vec![
                num(*g),
                m.n.to_string(),
                m.dip.to_string(),
                num(m.t_min),
                num(m.l_min()),
                num(m.neg_log_l),
                m.bits.to_string(),
            ]);
        }
        fit_rows.push(vec![
            num(*g),
            num(fit.alpha),
            num(fit.intercept),
            num(fit.r2),
            fit.monotone.to_string(),
            fit.rejected.clone().unwrap_or_default(),
        ]);
    }
    let mut files = vec![
        ctx.table("perimeter.csv", &["g_over_j", "n", "dip", "t_min_jt", "l_min", "neg_log_l", "bits"], &points)?,
        ctx.table("perimeter_fits.csv", &["g_over_j", "alpha", "intercept", "r2", "monotone", "rejected"], &fit_rows)?,
    ];

    if !spec.squeeze_sizes.is_empty() {
        let start = Instant::now();
        let (lo, hi, count) = (spec.mu_ratio_range[0], spec.mu_ratio_range[1], spec.mu_ratio_range[2] as usize);
        let mu_c = LmgModel::new(2, 1.0, 0.0)?.critical_mu();
        let mus: Vec<f64> = (0..count)
            .map(|k| mu_c * if count == 1 { lo } else { lo + (hi - lo) * k as f64 / (count - 1) as f64 })
            .collect();
        let plan = EvolutionPlan::uniform(spec.lmg_t_end, spec.lmg_t_step)?.with_tolerance(spec.tolerance)?;
        let optima = squeezing_optimum_per_size(&spec.squeeze_sizes, 1.0, &mus, &plan)?;
        timings.push(Timing {
            label: "squeezing".into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        let rows: Vec<Vec<String>> = optima
            .iter()
            .map(|o| vec![o.n.to_string(), num(o.mu / mu_c), num(o.xi2_min), num(db(o.xi2_min)), num(o.t_opt)])
            .collect();
        files.push(ctx.table("squeezing_scaling.csv", &["n", "mu_over_muc", "xi2_min", "xi2_min_db", "t_opt_jt"], &rows)?);
        let sizes: Vec<usize> = optima.iter().map(|o| o.n).collect();
        let xi: Vec<f64> = optima.iter().map(|o| o.xi2_min).collect();
        let exponent = if sizes.len() >= 2 { Some(power_law_exponent(&sizes, &xi)?) } else { None };
        files.push(ctx.json(
            "scaling_summary.json",
            &serde_json::json!({
                "perimeter": fits.iter().map(|(g, (_, f))| serde_json::json!({"g_over_j": g, "fit": f})).collect::<Vec<_>>(),
                "squeezing_alpha": exponent.map(|e| e.0),
                "squeezing_alpha_r2": exponent.map(|e| e.1),
            }),
        )?);
    }
    Ok(Outcome { files, timings })
}

fn calib_check(ctx: &Ctx, matrix: Option<CrosstalkMatrix>) -> Result<Outcome> {
    let spec = ctx.spec;
    let n = ctx.device.n_qubits;
    let start = Instant::now();
    let m = matrix.unwrap_or_else(|| CrosstalkMatrix::synthetic(n, spec.synthetic_amax, spec.seed));
    if m.n() != n {
        return Err(Error::Config(format!("crosstalk matrix is {0}x{0}, device has {n} qubits", m.n())));
    }
    let desired = DriveVector::uniform(n, mhz(spec.hx_mhz[0]), 0.0);
    let uncorrected = effective_drive(&m, &desired)?;
    let applied = correct_drive(&m, &desired)?;
    let effective = effective_drive(&m, &applied)?;
    let before = uniformity_check(&uncorrected, DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL);
    let after = uniformity_check(&effective, DEFAULT_AMPLITUDE_TOL, DEFAULT_PHASE_TOL);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|j| {
            vec![
                (j + 1).to_string(),
                ctx.device.labels.get(j).cloned().unwrap_or_default(),
                num(to_mhz(desired.0[j].norm())),
                num(to_mhz(applied.0[j].norm())),
                num(applied.0[j].arg()),
                num(to_mhz(uncorrected.0[j].norm())),
                num(uncorrected.0[j].arg()),
                num(to_mhz(effective.0[j].norm())),
                num(effective.0[j].arg()),
            ]
        })
        .collect();
    let files = vec![
        ctx.table(
            "drives.csv",
            &[
                "qubit",
                "label",
                "desired_amp_mhz",
                "applied_amp_mhz",
                "applied_phase_rad",
                "uncorrected_amp_mhz",
                "uncorrected_phase_rad",
                "effective_amp_mhz",
                "effective_phase_rad",
            ],
            &rows,
        )?,
        ctx.json(
            "uniformity.json",
            &serde_json::json!({
                "condition_number": m.condition_number(),
                "before_correction": before,
                "after_correction": after,
            }),
        )?,
    ];
    Ok(Outcome {
        files,
        timings: vec![Timing {
            label: "calibration".into(),
            seconds: start.elapsed().as_secs_f64(),
        }],
    })
}
