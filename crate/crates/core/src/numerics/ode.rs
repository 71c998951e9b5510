//! Adaptive Dormand-Prince 5(4) integration of scalar ODEs `y' = f(t, y)`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h}); the problem is too stiff for an explicit method")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}; the problem is too stiff for an explicit method")]
    StepBudget { t: f64, max_steps: usize },
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integration interval [{t0}, {t_end}]")]
    InvalidInterval { t0: f64, t_end: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    /// Absolute error floor, in units of `y`.
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Steps smaller than `min_step_fraction * (t_end - t0)` count as underflow.
    pub min_step_fraction: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-12, max_steps: 5_000_000, min_step_fraction: 1e-14 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights are the last row of A (FSAL); these are 5th minus 4th
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `(t0, y0)` to `t_end`, returning every accepted step
/// (including the initial point).
pub fn dopri5<F>(mut f: F, t0: f64, y0: f64, t_end: f64, opts: OdeOptions) -> Result<Vec<(f64, f64)>, OdeError>
where
    F: FnMut(f64, f64) -> f64,
{
    if !(t_end >= t0) {
        return Err(OdeError::InvalidInterval { t0, t_end });
    }
    let mut out = vec![(t0, y0)];
    if t_end == t0 {
        return Ok(out);
    }
    let span = t_end - t0;
    let h_min = opts.min_step_fraction * span;
    let mut t = t0;
    let mut y = y0;
    let mut k = [0.0; 7];
    k[0] = f(t, y);
    if !k[0].is_finite() {
        return Err(OdeError::NonFinite { t });
    }
    let scale0 = opts.abs_tol + opts.rel_tol * y.abs();
    let mut h = if k[0].abs() > 0.0 { (0.01 * scale0 / k[0].abs()).max(h_min * 10.0) } else { span * 1e-3 };
    h = h.min(span);

    let mut steps = 0usize;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::StepBudget { t, max_steps: opts.max_steps });
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            let mut acc = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += h * A[s][j] * kj;
            }
            k[s] = f(t + C[s] * h, acc);
            if !k[s].is_finite() {
                return Err(OdeError::NonFinite { t: t + C[s] * h });
            }
        }
        let y_new = y + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err = h * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
        let scale = opts.abs_tol + opts.rel_tol * y.abs().max(y_new.abs());
        let ratio = if scale > 0.0 { err.abs() / scale } else if err == 0.0 { 0.0 } else { f64::INFINITY };

        if ratio <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k[0] = k[6];
            out.push((t, y));
            let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            h *= grow;
        } else {
            h *= (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
            if h < h_min {
                return Err(OdeError::StepUnderflow { t, h });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let traj = dopri5(|_, y| -y, 0.0, 1.0, 5.0, OdeOptions { rel_tol: 1e-10, abs_tol: 1e-14, ..Default::default() })
            .unwrap();
        let &(t, y) = traj.last().unwrap();
        assert_eq!(t, 5.0);
        assert!((y - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn forced_oscillation_matches_closed_form() {
        // y' = cos t, y(0) = 0
        let traj = dopri5(|t, _| t.cos(), 0.0, 0.0, 10.0, OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..Default::default() })
            .unwrap();
        for &(t, y) in &traj {
            assert!((y - t.sin()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn zero_rhs_stays_put() {
        let traj = dopri5(|_, _| 0.0, 0.0, 0.0, 1.0, OdeOptions::default()).unwrap();
        assert!(traj.iter().all(|&(_, y)| y == 0.0));
    }

    #[test]
    fn stiff_problem_exhausts_budget() {
        let opts = OdeOptions { max_steps: 1000, ..Default::default() };
        let err = dopri5(|_, y| -1e9 * (y - 1.0), 0.0, 0.0, 1.0, opts).unwrap_err();
        assert!(matches!(err, OdeError::StepBudget { .. }));
    }

    #[test]
    fn rejects_backwards_interval() {
        assert!(matches!(
            dopri5(|_, y| y, 1.0, 0.0, 0.0, OdeOptions::default()),
            Err(OdeError::InvalidInterval { .. })
        ));
    }
}
