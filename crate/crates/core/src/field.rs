//! Time-varying molecule velocity profiles induced by a uniform electric
//! field, and the two field designers.
//!
//! Every profile describes the x-axis velocity `v_x(t)` of the molecules in
//! metres per second and the matching group-centre displacement. Profiles
//! that are defined on a single bit interval (exponential, piecewise) carry
//! their `period` and repeat with it, so the same field acts on every
//! interval.
//!
//! Two designers turn a power budget into a field:
//!
//! * [`design_sinusoidal`]: `v(t) = A sin(2πft − φ) + DC` with `A = DC`, one
//!   oscillation per interval, and the phase chosen so that the first
//!   velocity minimum coincides with the arrival of the group centre at the
//!   receiver.
//! * [`design_exponential`]: the stationary path of the mean-square
//!   receiver/group-centre distance under the power budget, which solves
//!   `y'' = λ² y` and gives `x(t) = C1 e^{λt} + C2 e^{−λt} + x0`.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::roots::{bracketed_secant, RootError, RootOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid design constraint: {0}")]
    InvalidConstraint(String),
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
    #[error("root finder failed: {0}")]
    NonConvergence(#[from] RootError),
    #[error("invalid interval: t = {t} < t0 = {t0}")]
    InvalidInterval { t0: f64, t: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Largest `λ·T_int` the exponential designer searches.
pub const MAX_LAMBDA_PERIODS: f64 = 50.0;

/// Velocity profile along the transmitter-receiver axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityProfile {
    Constant {
        velocity: f64,
    },
    /// `amplitude · sin(2π·frequency·t − phase) + offset`
    Sinusoidal {
        amplitude: f64,
        offset: f64,
        frequency: f64,
        phase: f64,
    },
    /// Velocity of `x(t) = c1 e^{λt} + c2 e^{−λt} + x0_offset`, repeated
    /// every `period` seconds.
    Exponential {
        c1: f64,
        c2: f64,
        lambda: f64,
        x0_offset: f64,
        period: f64,
    },
    /// Linear interpolation between `(time, velocity)` knots on
    /// `[0, period)`, holding the end values outside the knot range.
    PiecewiseCustom {
        knots: Vec<(f64, f64)>,
        period: f64,
    },
}

/// Power budget and boundary conditions for the designers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConstraint {
    /// Bound on the interval average of `v_x²` (m²/s²).
    pub xi_v: f64,
    /// Bit interval (s).
    pub t_int: f64,
    /// Transmitter-receiver distance (m).
    pub x0: f64,
    /// Group-centre position at the end of the interval (m); exponential
    /// design only.
    #[serde(default)]
    pub x1: Option<f64>,
}

impl DesignConstraint {
    pub fn new(xi_v: f64, t_int: f64, x0: f64) -> Self {
        Self { xi_v, t_int, x0, x1: None }
    }

    pub fn with_final_position(mut self, x1: f64) -> Self {
        self.x1 = Some(x1);
        self
    }

    fn validate(&self) -> Result<(), FieldError> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(FieldError::InvalidConstraint(format!("{name} must be positive and finite, got {v}")))
            }
        };
        check("t_int", self.t_int)?;
        check("x0", self.x0)?;
        if !(self.xi_v.is_finite() && self.xi_v >= 0.0) {
            return Err(FieldError::InvalidConstraint(format!("xi_v must be non-negative, got {}", self.xi_v)));
        }
        Ok(())
    }
}

impl VelocityProfile {
    pub fn constant(velocity: f64) -> Self {
        Self::Constant { velocity }
    }

    /// Sinusoid with `A = DC = sqrt(2ξ/3)` and one period per bit interval.
    pub fn sinusoid_for_budget(xi_v: f64, t_int: f64, phase: f64) -> Self {
        let a = (2.0 * xi_v / 3.0).sqrt();
        Self::Sinusoidal { amplitude: a, offset: a, frequency: 1.0 / t_int, phase }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Sinusoidal { .. } => "sinusoidal",
            Self::Exponential { .. } => "exponential",
            Self::PiecewiseCustom { .. } => "piecewise_custom",
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |msg: String| Err(FieldError::InvalidProfile(msg));
        match self {
            Self::Constant { velocity } if !velocity.is_finite() => bad("velocity must be finite".into()),
            Self::Sinusoidal { amplitude, offset, frequency, phase } => {
                if !(frequency.is_finite() && *frequency > 0.0) {
                    bad(format!("frequency must be positive, got {frequency}"))
                } else if !(amplitude.is_finite() && offset.is_finite() && phase.is_finite()) {
                    bad("sinusoid parameters must be finite".into())
                } else {
                    Ok(())
                }
            }
            Self::Exponential { c1, c2, lambda, x0_offset, period } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    bad(format!("lambda must be positive, got {lambda}"))
                } else if !(period.is_finite() && *period > 0.0) {
                    bad(format!("period must be positive, got {period}"))
                } else if !(c1.is_finite() && c2.is_finite() && x0_offset.is_finite()) {
                    bad("exponential coefficients must be finite".into())
                } else {
                    Ok(())
                }
            }
            Self::PiecewiseCustom { knots, period } => {
                if !(period.is_finite() && *period > 0.0) {
                    return bad(format!("period must be positive, got {period}"));
                }
                if knots.is_empty() {
                    return bad("at least one knot is required".into());
                }
                if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite() || t < 0.0 || t > *period) {
                    return bad("knots must be finite with times in [0, period]".into());
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("knot times must be strictly increasing".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Repetition period, if the profile is defined per interval.
    pub fn period(&self) -> Option<f64> {
        match self {
            Self::Exponential { period, .. } | Self::PiecewiseCustom { period, .. } => Some(*period),
            Self::Sinusoidal { frequency, .. } => Some(1.0 / frequency),
            Self::Constant { .. } => None,
        }
    }

    /// True when `v(t + t_int) = v(t)` for all `t`, i.e. every emission at
    /// a multiple of `t_int` sees the same field.
    pub fn repeats_every(&self, t_int: f64) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Sinusoidal { frequency, .. } => {
                let cycles = frequency * t_int;
                cycles.round() >= 1.0 && (cycles - cycles.round()).abs() < 1e-9
            }
            Self::Exponential { period, .. } | Self::PiecewiseCustom { period, .. } => {
                let n = t_int / period;
                n.round() >= 1.0 && (n - n.round()).abs() < 1e-9
            }
        }
    }

    /// `v_x(t)` in m/s.
    pub fn velocity_at(&self, t: f64) -> f64 {
        match self {
            Self::Constant { velocity } => *velocity,
            Self::Sinusoidal { amplitude, offset, frequency, phase } => {
                amplitude * (TAU * frequency * t - phase).sin() + offset
            }
            Self::Exponential { c1, c2, lambda, period, .. } => {
                let (_, s) = reduce(t, *period);
                lambda * (scaled_exp(*c1, lambda * s) - c2 * (-lambda * s).exp())
            }
            Self::PiecewiseCustom { knots, period } => {
                let (_, s) = reduce(t, *period);
                interpolate(knots, s)
            }
        }
    }

    /// Velocity at local time `s ∈ [0, period]` of a restarting profile,
    /// including the end value `s = period` that [`Self::velocity_at`]
    /// wraps to the next restart. Other variants use `s` as absolute time.
    pub fn velocity_in_period(&self, s: f64) -> f64 {
        match self {
            Self::Exponential { c1, c2, lambda, .. } => lambda * (scaled_exp(*c1, lambda * s) - c2 * (-lambda * s).exp()),
            Self::PiecewiseCustom { knots, .. } => interpolate(knots, s),
            _ => self.velocity_at(s),
        }
    }

    /// Group-centre displacement `∫_{t0}^{t} v_x(τ) dτ` in metres.
    pub fn displacement(&self, t0: f64, t: f64) -> Result<f64, FieldError> {
        if t < t0 {
            return Err(FieldError::InvalidInterval { t0, t });
        }
        Ok(self.position(t) - self.position(t0))
    }

    /// Antiderivative of the velocity with `position(0) = 0` for the
    /// periodic variants; differences of it are displacements.
    fn position(&self, t: f64) -> f64 {
        match self {
            Self::Constant { velocity } => velocity * t,
            Self::Sinusoidal { amplitude, offset, frequency, phase } => {
                let w = TAU * frequency;
                offset * t - amplitude / w * ((w * t - phase).cos() - (-phase).cos())
            }
            Self::Exponential { c1, c2, lambda, period, .. } => {
                let within = |s: f64| {
                    (scaled_exp(*c1, lambda * s) - c1) + c2 * ((-lambda * s).exp() - 1.0)
                };
                let (k, s) = reduce(t, *period);
                k * within(*period) + within(s)
            }
            Self::PiecewiseCustom { knots, period } => {
                let (k, s) = reduce(t, *period);
                k * piecewise_integral(knots, *period, |a, b| 0.5 * (a + b)) + piecewise_integral(knots, s, |a, b| 0.5 * (a + b))
            }
        }
    }

    /// Interval average of `v_x²` over `[0, t_end]` in m²/s².
    pub fn average_power(&self, t_end: f64) -> f64 {
        assert!(t_end > 0.0, "average_power needs a positive horizon");
        let energy = match self {
            Self::Constant { velocity } => velocity * velocity * t_end,
            Self::Sinusoidal { amplitude: a, offset: d, frequency, phase } => {
                let w = TAU * frequency;
                d * d * t_end + a * a * (0.5 * t_end - ((2.0 * (w * t_end - phase)).sin() - (-2.0 * phase).sin()) / (4.0 * w))
                    - 2.0 * a * d * ((w * t_end - phase).cos() - (-phase).cos()) / w
            }
            Self::Exponential { c1, c2, lambda, period, .. } => {
                let l = *lambda;
                let within = |s: f64| {
                    let grow = if *c1 == 0.0 { 0.0 } else { (2.0 * (c1.abs().ln() + l * s)).exp() - c1 * c1 };
                    0.5 * l * grow + 0.5 * l * c2 * c2 * (-(-2.0 * l * s).exp_m1()) - 2.0 * c1 * c2 * l * l * s
                };
                let (k, s) = reduce(t_end, *period);
                k * within(*period) + within(s)
            }
            Self::PiecewiseCustom { knots, period } => {
                let sq = |a: f64, b: f64| (a * a + a * b + b * b) / 3.0;
                let (k, s) = reduce(t_end, *period);
                k * piecewise_integral(knots, *period, sq) + piecewise_integral(knots, s, sq)
            }
        };
        energy / t_end
    }

    /// First velocity minimum of a sinusoid in `(0, 1/f]`, i.e. the arrival
    /// time targeted by [`design_sinusoidal`].
    pub fn first_velocity_minimum(&self) -> Option<f64> {
        match self {
            Self::Sinusoidal { frequency, phase, amplitude, .. } if *amplitude > 0.0 => {
                let w = TAU * frequency;
                let theta = (phase - FRAC_PI_2).rem_euclid(TAU);
                let theta = if theta == 0.0 { TAU } else { theta };
                Some(theta / w)
            }
            _ => None,
        }
    }
}

/// Splits `t` into whole periods and the remainder in `[0, period)`.
fn reduce(t: f64, period: f64) -> (f64, f64) {
    let k = (t / period).floor();
    let s = t - k * period;
    if s < 0.0 {
        (k - 1.0, s + period)
    } else if s >= period {
        (k + 1.0, s - period)
    } else {
        (k, s)
    }
}

/// `c·e^{x}` without forming `0·∞` when `c` is tiny and `x` large.
fn scaled_exp(c: f64, x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c.signum() * (c.abs().ln() + x).exp()
    }
}

fn interpolate(knots: &[(f64, f64)], s: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if s <= first.0 {
        return first.1;
    }
    if s >= last.0 {
        return last.1;
    }
    let i = knots.partition_point(|k| k.0 <= s);
    let (t0, v0) = knots[i - 1];
    let (t1, v1) = knots[i];
    v0 + (v1 - v0) * (s - t0) / (t1 - t0)
}

/// `∫_0^s g(v)` for the piecewise-linear profile, where `segment(a, b)` is
/// the mean of `g` over a segment running linearly from `a` to `b`.
fn piecewise_integral(knots: &[(f64, f64)], s: f64, segment: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = (0.0, interpolate(knots, 0.0));
    let push = |to: (f64, f64), acc: &mut f64, prev: &mut (f64, f64)| {
        if to.0 > prev.0 {
            *acc += (to.0 - prev.0) * segment(prev.1, to.1);
        }
        *prev = to;
    };
    for &(t, v) in knots {
        if t >= s {
            break;
        }
        if t > prev.0 {
            push((t, v), &mut acc, &mut prev);
        } else {
            prev.1 = v;
        }
    }
    push((s, interpolate(knots, s)), &mut acc, &mut prev);
    acc
}

/// Designs the sinusoidal field for a power budget.
///
/// `A_v = DC_v = sqrt(2ξ/3)` keeps the velocity non-negative while
/// spending the whole budget, `f_v = 1/T_int`, and `φ_v` places the first
/// velocity minimum `t₁` at the moment the group centre has travelled `x0`.
pub fn design_sinusoidal(c: &DesignConstraint) -> Result<VelocityProfile, FieldError> {
    c.validate()?;
    if c.xi_v <= 0.0 {
        return Err(FieldError::InfeasibleDesign("zero power budget cannot move the group to the receiver".into()));
    }
    let amplitude = (2.0 * c.xi_v / 3.0).sqrt();
    let reach = amplitude * c.t_int;
    if c.x0 > reach * (1.0 + 1e-12) {
        return Err(FieldError::InfeasibleDesign(format!(
            "x0 = {} m exceeds the {} m the budget can cover by the first velocity minimum",
            c.x0, reach
        )));
    }
    let w = TAU / c.t_int;
    // φ ∈ (π/2, π/2 + 2π] keeps t₁ = (φ − π/2)/ω on the first minimum
    let residual = |phase: f64| {
        let p = VelocityProfile::sinusoid_for_budget(c.xi_v, c.t_int, phase);
        let t1 = (phase - FRAC_PI_2) / w;
        (p.position(t1) - c.x0) / c.x0
    };
    let lo = FRAC_PI_2 + 1e-12;
    let hi = FRAC_PI_2 + TAU;
    let phase = if residual(hi) <= 0.0 {
        hi
    } else {
        bracketed_secant(residual, lo, hi, RootOptions::default())?
    };
    Ok(VelocityProfile::sinusoid_for_budget(c.xi_v, c.t_int, phase.rem_euclid(TAU)))
}

/// Exponential-field coefficients `(C1, C2)` for a given `λ`, plus
/// `C1·e^{λT}` which stays finite when `e^{λT}` alone would not.
fn exponential_coefficients(lambda: f64, t_int: f64, x0: f64, x1: f64) -> (f64, f64, f64) {
    let s = (-lambda * t_int).exp();
    let one_minus_s = -(-lambda * t_int).exp_m1();
    let one_minus_s2 = -(-2.0 * lambda * t_int).exp_m1();
    let c1_grown = (x1 - one_minus_s * x0) / one_minus_s2;
    let c1 = c1_grown * s;
    let c2 = -x0 - c1;
    (c1, c2, c1_grown)
}

/// Left-hand side of the power equation for the exponential field.
fn exponential_power(lambda: f64, t_int: f64, x0: f64, x1: f64) -> f64 {
    let (c1, c2, c1_grown) = exponential_coefficients(lambda, t_int, x0, x1);
    let lt = lambda * t_int;
    let one_minus_s2 = -(-2.0 * lt).exp_m1();
    lambda / (2.0 * t_int) * (c1_grown * c1_grown * one_minus_s2 + c2 * c2 * one_minus_s2 - 4.0 * c1 * c2 * lt)
}

/// Designs the exponential field that keeps the group centre as close to
/// the receiver as possible (in mean square) while spending exactly the
/// power budget and ending the interval at `x1`.
pub fn design_exponential(c: &DesignConstraint) -> Result<VelocityProfile, FieldError> {
    c.validate()?;
    let x1 = c.x1.ok_or_else(|| FieldError::InvalidConstraint("x1 is required for the exponential design".into()))?;
    if !(x1.is_finite() && x1 >= 0.0) {
        return Err(FieldError::InvalidConstraint(format!("x1 must be non-negative, got {x1}")));
    }
    if c.xi_v <= 0.0 {
        return Err(FieldError::InfeasibleDesign("zero power budget cannot move the group to the receiver".into()));
    }
    let (t, x0) = (c.t_int, c.x0);
    let residual = |lambda: f64| exponential_power(lambda, t, x0, x1) / c.xi_v - 1.0;
    let lo = 1e-9 / t;
    let hi = MAX_LAMBDA_PERIODS / t;
    if residual(lo) >= 0.0 {
        return Err(FieldError::InfeasibleDesign(format!(
            "budget {} is below the straight-line power {} needed to reach x1",
            c.xi_v,
            (x1 / t).powi(2)
        )));
    }
    if residual(hi) < 0.0 {
        return Err(FieldError::InfeasibleDesign(format!(
            "budget {} needs λ·T_int above {MAX_LAMBDA_PERIODS}",
            c.xi_v
        )));
    }
    let lambda = bracketed_secant(residual, lo, hi, RootOptions::default())?;
    let (c1, c2, _) = exponential_coefficients(lambda, t, x0, x1);
    Ok(VelocityProfile::Exponential { c1, c2, lambda, x0_offset: x0, period: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> DesignConstraint {
        DesignConstraint::new(1e-4, 1e-4, 5e-7)
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn sinusoid_design_reproduces_fig2_parameters() {
        let p = design_sinusoidal(&reference()).unwrap();
        let VelocityProfile::Sinusoidal { amplitude, offset, frequency, phase } = p else { panic!() };
        assert_relative_eq!(amplitude, (2e-4f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(amplitude, 8.1650e-3, max_relative = 1e-4);
        assert_eq!(amplitude, offset);
        assert_relative_eq!(frequency, 1e4, max_relative = 1e-12);
        assert!((phase - 5.07).abs() < 0.01, "phase {phase}");
    }

    #[test]
    fn sinusoid_design_matches_independent_oracle() {
        // oracle: bisection on φ with Simpson quadrature of the velocity
        let (xi, t_int, x0) = (4e-4, 1e-4, 5e-7);
        let a = (2.0 * xi / 3.0f64).sqrt();
        let w = TAU / t_int;
        let travel = |phi: f64| {
            let t1 = (phi - FRAC_PI_2) / w;
            simpson(|t| a * (w * t - phi).sin() + a, 0.0, t1, 20_000)
        };
        let (mut lo, mut hi) = (FRAC_PI_2 + 1e-9, FRAC_PI_2 + TAU);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if travel(mid) < x0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let oracle_phase = (0.5 * (lo + hi)).rem_euclid(TAU);

        let p = design_sinusoidal(&DesignConstraint::new(xi, t_int, x0)).unwrap();
        let VelocityProfile::Sinusoidal { phase, .. } = p else { panic!() };
        assert!((phase - oracle_phase).abs() < 1e-8);
        let t1 = p.first_velocity_minimum().unwrap();
        let travelled = simpson(|t| p.velocity_at(t), 0.0, t1, 20_000);
        assert!((travelled - x0).abs() < 1e-12, "travelled {travelled}");
    }

    #[test]
    fn sinusoid_velocity_vanishes_at_first_minimum() {
        let p = design_sinusoidal(&reference()).unwrap();
        let t1 = p.first_velocity_minimum().unwrap();
        assert!(p.velocity_at(t1).abs() < 1e-15);
        assert_relative_eq!(p.displacement(0.0, t1).unwrap(), 5e-7, max_relative = 1e-11);
    }

    #[test]
    fn sinusoid_design_rejects_bad_inputs() {
        assert!(matches!(design_sinusoidal(&DesignConstraint::new(1e-4, 0.0, 5e-7)), Err(FieldError::InvalidConstraint(_))));
        assert!(matches!(design_sinusoidal(&DesignConstraint::new(1e-4, 1e-4, -1.0)), Err(FieldError::InvalidConstraint(_))));
        assert!(matches!(design_sinusoidal(&DesignConstraint::new(0.0, 1e-4, 5e-7)), Err(FieldError::InfeasibleDesign(_))));
        // reach with ξ = 1e-6 is 8.2e-8 m over a whole interval
        assert!(matches!(design_sinusoidal(&DesignConstraint::new(1e-6, 1e-4, 5e-7)), Err(FieldError::InfeasibleDesign(_))));
    }

    #[test]
    fn exponential_design_reproduces_fig3_parameters() {
        let c = reference().with_final_position(5e-7);
        let p = design_exponential(&c).unwrap();
        let VelocityProfile::Exponential { c1, c2, lambda, .. } = p else { panic!() };
        assert!(c1.abs() < 1e-11);
        assert_relative_eq!(c2, -5e-7, max_relative = 1e-6);
        assert_relative_eq!(lambda, 8e4, max_relative = 1e-5);
        assert_relative_eq!(p.average_power(1e-4), 1e-4, max_relative = 1e-9);
        assert!((p.displacement(0.0, 1e-4).unwrap() - 5e-7).abs() < 1e-12 * 5e-7);
    }

    #[test]
    fn exponential_design_power_matches_quadrature() {
        let p = design_exponential(&reference().with_final_position(5e-7)).unwrap();
        let q = simpson(|t| p.velocity_at(t).powi(2), 0.0, 1e-4 * (1.0 - 1e-15), 400_000) / 1e-4;
        assert!((q - 1e-4).abs() < 1e-13, "{q}");
    }

    #[test]
    fn exponential_travel_matches_sinusoid_for_x1_at_travel_distance() {
        let sin = design_sinusoidal(&reference()).unwrap();
        let travel = sin.displacement(0.0, 1e-4).unwrap();
        assert_relative_eq!(travel, 8.1650e-7, max_relative = 1e-4);
        let exp = design_exponential(&reference().with_final_position(travel)).unwrap();
        assert_relative_eq!(exp.displacement(0.0, 1e-4).unwrap(), travel, max_relative = 1e-12);
    }

    #[test]
    fn exponential_design_errors() {
        let missing = design_exponential(&reference());
        assert!(matches!(missing, Err(FieldError::InvalidConstraint(_))));
        // straight line to x1 = 2e-6 m already needs 4e-4 m²/s²
        let weak = design_exponential(&DesignConstraint::new(1e-4, 1e-4, 5e-7).with_final_position(2e-6));
        assert!(matches!(weak, Err(FieldError::InfeasibleDesign(_))));
        let huge = design_exponential(&DesignConstraint::new(1.0, 1e-4, 1e-7).with_final_position(1e-7));
        assert!(matches!(huge, Err(FieldError::InfeasibleDesign(_))));
    }

    #[test]
    fn constant_profile_examples() {
        let p = VelocityProfile::constant(0.01);
        assert_eq!(p.velocity_at(3.3e-5), 0.01);
        assert_relative_eq!(p.average_power(1e-4), 1e-4, max_relative = 1e-15);
        assert_relative_eq!(p.displacement(0.0, 5e-5).unwrap(), 5e-7, max_relative = 1e-12);
    }

    #[test]
    fn exponential_profile_examples() {
        let p = VelocityProfile::Exponential { c1: 0.0, c2: -5e-7, lambda: 8e4, x0_offset: 5e-7, period: 1e-4 };
        assert_relative_eq!(p.velocity_at(0.0), 0.04, max_relative = 1e-15);
        // limit x(t) → x0 = 5e-7 after many decay times (still inside one period)
        let long = VelocityProfile::Exponential { c1: 0.0, c2: -5e-7, lambda: 8e4, x0_offset: 5e-7, period: 2e-3 };
        let d = long.displacement(0.0, 1e-3).unwrap();
        assert_relative_eq!(d, 5e-7, max_relative = 1e-12);
        let q = simpson(|t| long.velocity_at(t), 0.0, 1e-3, 200_000);
        assert_relative_eq!(d, q, max_relative = 1e-9);
        assert_eq!(p.displacement(2e-5, 2e-5).unwrap(), 0.0);
    }

    #[test]
    fn sinusoid_displacement_over_period_is_offset_times_period() {
        let p = design_sinusoidal(&reference()).unwrap();
        assert_relative_eq!(p.displacement(0.0, 1e-4).unwrap(), 8.1650e-7, max_relative = 1e-4);
    }

    #[test]
    fn displacement_rejects_reversed_interval() {
        let p = VelocityProfile::constant(1.0);
        assert!(matches!(p.displacement(2.0, 1.0), Err(FieldError::InvalidInterval { .. })));
    }

    #[test]
    fn piecewise_profile_integrates_exactly() {
        let p = VelocityProfile::PiecewiseCustom {
            knots: vec![(0.0, 0.0), (1e-5, 0.02), (5e-5, 0.0), (8e-5, 0.01)],
            period: 1e-4,
        };
        p.validate().unwrap();
        assert_relative_eq!(p.velocity_at(5e-6), 0.01, max_relative = 1e-12);
        assert_relative_eq!(p.velocity_at(9e-5), 0.01, max_relative = 1e-12);
        assert_relative_eq!(p.velocity_at(1.05e-4), 0.01, max_relative = 1e-12);
        let q = simpson(|t| p.velocity_at(t), 0.0, 8e-5, 80_000);
        assert_relative_eq!(p.displacement(0.0, 8e-5).unwrap(), q, max_relative = 1e-9);
        let q2 = simpson(|t| p.velocity_at(t).powi(2), 0.0, 1e-4 * (1.0 - 1e-12), 100_000) / 1e-4;
        assert_relative_eq!(p.average_power(1e-4), q2, max_relative = 1e-6);
    }

    #[test]
    fn piecewise_validation() {
        let bad = VelocityProfile::PiecewiseCustom { knots: vec![(0.0, 1.0), (0.0, 2.0)], period: 1.0 };
        assert!(bad.validate().is_err());
        let empty = VelocityProfile::PiecewiseCustom { knots: vec![], period: 1.0 };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn profiles_round_trip_through_json() {
        let p = design_exponential(&reference().with_final_position(5e-7)).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"variant\":\"exponential\""));
        let back: VelocityProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let err = serde_json::from_str::<VelocityProfile>(r#"{"variant":"constant","velocity":1,"extra":2}"#);
        assert!(err.is_err());
    }

    #[test]
    fn periodic_extension_repeats_velocity() {
        let p = design_exponential(&reference().with_final_position(8e-7)).unwrap();
        for &t in &[1e-6, 3.3e-5, 9e-5] {
            assert_relative_eq!(p.velocity_at(t), p.velocity_at(t + 3e-4), max_relative = 1e-9);
        }
        assert!(p.repeats_every(1e-4));
        assert!(!p.repeats_every(1.5e-4));
    }

    fn arb_profile() -> impl Strategy<Value = VelocityProfile> {
        prop_oneof![
            (-0.05f64..0.05).prop_map(VelocityProfile::constant),
            (1e-6f64..1e-2, 0.0f64..TAU).prop_map(|(xi, phi)| VelocityProfile::sinusoid_for_budget(xi, 1e-4, phi)),
            (1e-6f64..1e-3, 0.2f64..2.0).prop_filter_map("feasible", |(xi, r)| {
                design_exponential(&DesignConstraint::new(xi, 1e-4, 5e-7).with_final_position(r * 5e-7)).ok()
            }),
        ]
    }

    proptest! {
        #[test]
        fn displacement_is_additive(p in arb_profile(), a in 0.0f64..3e-4, ab in 0.0f64..2e-4, bc in 0.0f64..2e-4) {
            let b = a + ab;
            let c = b + bc;
            let whole = p.displacement(a, c).unwrap();
            let split = p.displacement(a, b).unwrap() + p.displacement(b, c).unwrap();
            let scale = p.displacement(a, b).unwrap().abs() + p.displacement(b, c).unwrap().abs();
            prop_assert!((whole - split).abs() <= 1e-12 * scale.max(1e-30));
        }

        #[test]
        fn zero_width_interval_has_no_displacement(p in arb_profile(), t in 0.0f64..1e-3) {
            prop_assert_eq!(p.displacement(t, t).unwrap(), 0.0);
        }

        #[test]
        fn designed_sinusoid_is_non_destructive(xi in 1e-5f64..1e-2, x0 in 1e-7f64..6e-7) {
            if let Ok(p) = design_sinusoidal(&DesignConstraint::new(xi, 1e-4, x0)) {
                let a = match p { VelocityProfile::Sinusoidal { amplitude, .. } => amplitude, _ => unreachable!() };
                for i in 0..10_000 {
                    let t = i as f64 * 1e-8;
                    prop_assert!(p.velocity_at(t) >= -1e-15 * a);
                }
            }
        }

        #[test]
        fn designs_spend_the_budget(xi in 1e-6f64..1e-2, x0 in 1e-7f64..2e-6, r in 0.0f64..2.0) {
            let c = DesignConstraint::new(xi, 1e-4, x0).with_final_position(r * x0);
            for p in [design_sinusoidal(&c), design_exponential(&c)].into_iter().flatten() {
                let rel = (p.average_power(1e-4) - xi).abs() / xi;
                prop_assert!(rel < 1e-8, "rel {}", rel);
            }
        }

        #[test]
        fn exponential_meets_boundary_conditions(xi in 1e-6f64..1e-2, x0 in 1e-7f64..2e-6, r in 0.0f64..2.0) {
            let x1 = r * x0;
            if let Ok(p) = design_exponential(&DesignConstraint::new(xi, 1e-4, x0).with_final_position(x1)) {
                prop_assert_eq!(p.displacement(0.0, 0.0).unwrap(), 0.0);
                let end = p.displacement(0.0, 1e-4).unwrap();
                prop_assert!((end - x1).abs() <= 1e-12 * x0.max(x1), "x(T) = {}, x1 = {}", end, x1);
            }
        }
    }
}
