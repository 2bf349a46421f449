//! Reductions over families of trajectories: crossovers, squeezing sweeps
//! and finite-size fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::precise::{loschmidt_first_minimum, PreciseMinimum, PreciseOptions};
use crate::engine::{initial_state, EvolutionPlan, SpaceTag};
use crate::error::{param, Result};
use crate::model::{build_lmg_hamiltonian, LmgModel};
use crate::observables::trajectory::{run_trajectory, BestSqueezing, ObservableSet, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return param("linear fit needs at least two matching points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return param("linear fit needs distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Order-parameter crossover: from the last field with `|value| > upper`
/// to the first field beyond it with `|value| < lower`. Fields ascending.
pub fn crossover_bracket(fields: &[f64], values: &[f64], upper: f64, lower: f64) -> Option<(f64, f64)> {
    let i_hi = values.iter().rposition(|v| v.abs() > upper)?;
    let j = (i_hi + 1..values.len()).find(|&j| values[j].abs() < lower)?;
    Some((fields[i_hi], fields[j]))
}

/// End of the initial squeezing window: the first time `xi2` returns to 1,
/// linearly interpolated. `None` if it never does inside the series.
pub fn squeezing_window_end(t: &[f64], xi2: &[f64]) -> Option<f64> {
    let start = xi2.iter().position(|v| *v < 1.0)?;
    (start + 1..xi2.len()).find(|&k| xi2[k] >= 1.0).map(|k| {
        let (a, b) = (xi2[k - 1], xi2[k]);
        t[k - 1] + (t[k] - t[k - 1]) * (1.0 - a) / (b - a)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hx: f64,
    pub xi2_min: f64,
    pub t_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSweep {
    pub rows: Vec<SweepRow>,
    pub breakpoint_hx: f64,
    pub breakpoint_xi2: f64,
    /// Segment fits left and right of the breakpoint (both include it).
    pub left: Option<LinearFit>,
    pub right: Option<LinearFit>,
}

pub fn squeezing_sweep(rows: &[SweepRow]) -> Result<SqueezingSweep> {
    let rows: Vec<SweepRow> = rows.iter().copied().filter(|r| r.xi2_min.is_finite()).collect();
    if rows.is_empty() {
        return param("squeezing sweep needs at least one defined row");
    }
    let ib = rows
        .iter()
        .enumerate()
        .fold(0, |bi, (i, r)| if r.xi2_min < rows[bi].xi2_min { i } else { bi });
    let seg = |s: &[SweepRow]| {
        (s.len() >= 2).then(|| {
            let x: Vec<f64> = s.iter().map(|r| r.hx).collect();
            let y: Vec<f64> = s.iter().map(|r| r.xi2_min).collect();
            linear_fit(&x, &y).ok()
        })?
    };
    Ok(SqueezingSweep {
        breakpoint_hx: rows[ib].hx,
        breakpoint_xi2: rows[ib].xi2_min,
        left: seg(&rows[..=ib]),
        right: seg(&rows[ib..]),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerimeterFit {
    /// Slope of `-ln L_min` against N.
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `-ln L_min` increases with N at every step.
    pub monotone: bool,
    /// Set when no fit is meaningful (for example no dip at some size).
    pub rejected: Option<String>,
}

/// Fits `-ln L_min^(1) = alpha N + c` to precomputed minima.
pub fn fit_perimeter(points: &[PreciseMinimum]) -> Result<PerimeterFit> {
    if points.len() < 2 {
        return param("perimeter fit needs at least two sizes");
    }
    if points.iter().any(|p| !p.dip) {
        return Ok(PerimeterFit {
            alpha: 0.0,
            intercept: 0.0,
            r2: 0.0,
            monotone: false,
            rejected: Some("no-dip".into()),
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.neg_log_l).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(PerimeterFit {
        alpha: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        monotone: y.windows(2).all(|w| w[1] > w[0]),
        rejected: None,
    })
}

fn check_sizes(sizes: &[usize], min_count: usize) -> Result<()> {
    if sizes.len() < min_count {
        return param(format!("need at least {min_count} sizes"));
    }
    let mut s = sizes.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return param("duplicate sizes");
    }
    if s[0] < 2 {
        return param("sizes must be >= 2");
    }
    Ok(())
}

/// First echo minima of the LMG model at `mu = g`, coupling `j`, for each
/// size, followed by the perimeter-law fit.
pub fn perimeter_law_fit(sizes: &[usize], g: f64, j: f64) -> Result<(Vec<PreciseMinimum>, PerimeterFit)> {
    check_sizes(sizes, 4)?;
    let points = sizes
        .par_iter()
        .map(|&n| loschmidt_first_minimum(&LmgModel::new(n, j, g)?, &PreciseOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_perimeter(&points)?;
    Ok((points, fit))
}

/// Minimum of `xi2` over the plan grid for an LMG quench from `m = +N/2`.
pub fn lmg_squeezing_minimum(lmg: &LmgModel, plan: &EvolutionPlan) -> Result<BestSqueezing> {
    let h = build_lmg_hamiltonian(lmg);
    let opts = RunOptions {
        observables: ObservableSet { moments: true, per_qubit: false },
        refine: false,
        keep_best_state: false,
    };
    let run = run_trajectory(&h, initial_state(SpaceTag::Symmetric, lmg.n)?, plan, lmg.mu, 0.0, &opts)?;
    run.best.ok_or_else(|| crate::Error::Numerical("squeezing undefined on the whole grid".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeOptimum {
    pub n: usize,
    pub mu: f64,
    pub xi2_min: f64,
    pub t_opt: f64,
}

/// For each size, the field among `mus` giving the deepest squeezing.
pub fn squeezing_optimum_per_size(sizes: &[usize], j: f64, mus: &[f64], plan: &EvolutionPlan) -> Result<Vec<SizeOptimum>> {
    check_sizes(sizes, 1)?;
    if mus.is_empty() {
        return param("empty field list");
    }
    sizes
        .iter()
        .map(|&n| {
            let per_mu = mus
                .par_iter()
                .map(|&mu| Ok((mu, lmg_squeezing_minimum(&LmgModel::new(n, j, mu)?, plan)?)))
                .collect::<Result<Vec<_>>>()?;
            let (mu, b) = per_mu
                .into_iter()
                .fold(None, |acc: Option<(f64, BestSqueezing)>, cur| match acc {
                    Some(a) if a.1.xi2 <= cur.1.xi2 => Some(a),
                    _ => Some(cur),
                })
                .expect("nonempty");
            Ok(SizeOptimum { n, mu, xi2_min: b.xi2, t_opt: b.t })
        })
        .collect()
}

/// `y ~ N^-alpha` fitted in log-log space; returns `(alpha, r2)`.
pub fn power_law_exponent(sizes: &[usize], y: &[f64]) -> Result<(f64, f64)> {
    if y.iter().any(|v| !(*v > 0.0)) {
        return param("power-law fit needs positive values");
    }
    let x: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&x, &ly)?;
    Ok((-f.slope, f.r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14 && f.r2 == 1.0);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn crossover_and_window() {
        let h = [1.0, 2.0, 3.0, 4.0, 5.0];
        let v = [0.9, 0.5, 0.15, 0.05, 0.02];
        assert_eq!(crossover_bracket(&h, &v, 0.2, 0.1), Some((2.0, 4.0)));
        assert_eq!(crossover_bracket(&h, &[0.5; 5], 0.2, 0.1), None);
        let t = [0.0, 10.0, 20.0, 30.0];
        assert_eq!(squeezing_window_end(&t, &[1.0, 0.5, 0.8, 1.2]), Some(25.0));
        assert_eq!(squeezing_window_end(&t, &[1.0, 0.5, 0.8, 0.9]), None);
    }

    #[test]
    fn sweep_breakpoint_and_segments() {
        let rows: Vec<SweepRow> = [(1.0, 0.8), (2.0, 0.6), (3.0, 0.4), (4.0, 0.5), (5.0, 0.6)]
            .iter()
            .map(|&(hx, x)| SweepRow { hx, xi2_min: x, t_opt: 0.0 })
            .collect();
        let s = squeezing_sweep(&rows).unwrap();
        assert_eq!(s.breakpoint_hx, 3.0);
        assert!((s.left.unwrap().slope + 0.2).abs() < 1e-12);
        assert!((s.right.unwrap().slope - 0.1).abs() < 1e-12);
        let one = squeezing_sweep(&rows[..1]).unwrap();
        assert!(one.left.is_none() && one.right.is_none());
    }

    #[test]
    fn sizes_validation() {
        assert!(perimeter_law_fit(&[8, 8, 16, 32], 1.0, 1.0).is_err());
        assert!(perimeter_law_fit(&[8, 16, 32], 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_field_rejects_fit() {
        let (_, fit) = perimeter_law_fit(&[4, 6, 8, 10], 0.0, 1.0).unwrap();
        assert_eq!(fit.rejected.as_deref(), Some("no-dip"));
    }

    #[test]
    fn power_law_recovers_exponent() {
        let n = [8, 16, 32, 64];
        let y: Vec<f64> = n.iter().map(|&v| 3.0 * (v as f64).powf(-0.6)).collect();
        let (a, r2) = power_law_exponent(&n, &y).unwrap();
        assert!((a - 0.6).abs() < 1e-12 && r2 > 0.999_999);
    }
}
