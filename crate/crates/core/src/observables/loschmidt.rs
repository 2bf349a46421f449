//! First and global minima of a sampled Loschmidt echo.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// A grid minimum must sit this far below the preceding maximum.
pub const DIP_PROMINENCE: f64 = 1e-8;
/// Golden-section tolerance of refined minima [ns].
pub const REFINE_TOL_NS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoschmidtDiagnostics {
    pub l_min_first: f64,
    pub t_min_first: f64,
    pub l_min_global: f64,
    pub t_min_global: f64,
    pub no_dip: bool,
}

/// Index of the earliest strict grid minimum with enough prominence.
pub fn first_dip_index(l: &[f64]) -> Option<usize> {
    let mut running_max = f64::NEG_INFINITY;
    for i in 1..l.len().saturating_sub(1) {
        running_max = running_max.max(l[i - 1]);
        if l[i] < l[i - 1] && l[i] < l[i + 1] && running_max - l[i] > DIP_PROMINENCE {
            return Some(i);
        }
    }
    None
}

pub fn global_min_index(l: &[f64]) -> usize {
    l.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

/// Golden-section minimisation of `f` on `[a, b]`.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Minima of a sampled echo. `refine(a, b)` returns the continuous minimum
/// `(t, L)` inside the bracket `[a, b]` of neighbouring grid times.
pub fn loschmidt_diagnostics<R>(t: &[f64], l: &[f64], mut refine: R) -> Result<LoschmidtDiagnostics>
where
    R: FnMut(f64, f64) -> Result<(f64, f64)>,
{
    if t.len() != l.len() || t.is_empty() {
        return param("echo series must be nonempty and match its time grid");
    }
    let last = l.len() - 1;
    let mut refine_at = |i: usize| -> Result<(f64, f64)> {
        if i == 0 || i == last {
            return Ok((t[i], l[i]));
        }
        let (tm, lm) = refine(t[i - 1], t[i + 1])?;
        // Never report a refined value worse than the grid sample.
        Ok(if lm <= l[i] { (tm, lm.max(0.0)) } else { (t[i], l[i]) })
    };
    let (mut tg, mut lg) = refine_at(global_min_index(l))?;
    match first_dip_index(l) {
        Some(i) => {
            let (tf, lf) = refine_at(i)?;
            if lf < lg {
                tg = tf;
                lg = lf;
            }
            Ok(LoschmidtDiagnostics {
                l_min_first: lf,
                t_min_first: tf,
                l_min_global: lg,
                t_min_global: tg,
                no_dip: false,
            })
        }
        None => Ok(LoschmidtDiagnostics {
            l_min_first: l[last],
            t_min_first: t[last],
            l_min_global: lg.min(l[last]),
            t_min_global: if lg <= l[last] { tg } else { t[last] },
            no_dip: true,
        }),
    }
}
