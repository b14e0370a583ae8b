//! Small numerical kernels shared by the filters, the quadrature and the
//! Monte Carlo aggregation.

use crate::error::{Error, Result};

/// `ln Σ exp(v_i)`, tolerating `-inf` entries. Returns `-inf` when every
/// entry is `-inf` (or the slice is empty).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalize log-weights in place so their exponentials sum to one.
pub(crate) fn normalize_log(values: &mut [f64]) -> Result<()> {
    let lse = log_sum_exp(values);
    if !lse.is_finite() {
        return Err(Error::ZeroPosterior);
    }
    for v in values.iter_mut() {
        *v -= lse;
    }
    Ok(())
}

/// Pairwise (cascade) summation. Deterministic for a given input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance
/// `tol`. The interval is pre-split into `panels` pieces so narrow peaks are
/// not skipped by the first coarse estimate.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::Numeric(format!("bad integration interval [{a}, {b}]")));
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let hi = if k + 1 == panels { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_step(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, 60)?;
    }
    if !total.is_finite() {
        return Err(Error::Numeric("quadrature diverged".into()));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Numeric(format!("non-finite integrand near {m}")));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "quadrature did not reach tolerance {tol:e} near {m}"
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
