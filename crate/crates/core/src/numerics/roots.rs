//! Bracketed root finding.
//!
//! The solver keeps a sign-changing bracket at all times and takes secant
//! (regula falsi) steps inside it, falling back to bisection whenever a
//! secant step leaves the bracket or fails to halve it.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge after {iterations} iterations (best x = {best}, residual = {residual})")]
    MaxIterations { iterations: usize, best: f64, residual: f64 },
    #[error("function returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Stop once `|f(x)| <= residual_tol`.
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-12, max_iter: 200 }
    }
}

/// Finds `x` in `[lo, hi]` with `f(x) ≈ 0` given `f(lo)` and `f(hi)` of
/// opposite sign (or one of them zero).
///
/// Returns the best point found if the bracket collapses to adjacent floats
/// before the residual tolerance is met.
pub fn bracketed_secant<F>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b });
    }
    if fa.abs() <= opts.residual_tol {
        return Ok(a);
    }
    if fb.abs() <= opts.residual_tol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NotBracketed { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }

    let mut force_bisect = false;
    let (mut best, mut best_res) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..opts.max_iter {
        let width = b - a;
        let mid = a + 0.5 * width;
        if mid <= a || mid >= b {
            // bracket is down to adjacent floats
            return Ok(best);
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if !force_bisect && secant > a && secant < b { secant } else { mid };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x });
        }
        if fx.abs() < best_res.abs() {
            best = x;
            best_res = fx;
        }
        if fx.abs() <= opts.residual_tol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // secant steps that shrink the bracket slowly (one endpoint stuck)
        // are followed by a bisection
        force_bisect = !force_bisect && (b - a) > 0.5 * width;
    }
    Err(RootError::MaxIterations { iterations: opts.max_iter, best, residual: best_res })
}
