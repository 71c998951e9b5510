//! Molecule velocity under the applied field from the reduced BBO equation
//! `Γ u' + f u = f v(t)`, `u(0) = 0`, with Stokes drag `f = 6π μ_f r_m`
//! and the added-mass inertia `Γ = (2/3)π r_m³ (2ρ_m + ρ_f)`.
//!
//! Closed forms cover constant, sinusoidal and `C1 = 0` exponential
//! forcing; any profile can be integrated numerically. The radius bound
//! `sqrt(9 μ_f |u| / ((2ρ_m + ρ_f)|u'|))` measures how strongly drag
//! dominates inertia at an instant.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::VelocityProfile;
use crate::numerics::ode::{dopri5, OdeError, OdeOptions};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Temperature used for the Stokes-Einstein radius (K).
pub const ROOM_TEMPERATURE: f64 = 293.0;
/// Default margin by which the radius bound must exceed `r_m`.
pub const DOMINANCE_FACTOR: f64 = 10.0;
/// Relative gap `|f − λΓ|/f` below which the resonant limit is used.
pub const RESONANCE_GAP: f64 = 1e-9;
/// Grid resolution of the feasibility-time scan.
const FEASIBILITY_GRID: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("invalid fluid parameters: {0}")]
    InvalidParams(String),
    #[error("{0} forcing has no closed-form response here; use the numerical solver")]
    GeneralFormUnsupported(&'static str),
    #[error("integrator step underflow at t = {t} (step {h}); the drag/inertia ratio is too extreme for explicit integration")]
    StiffnessFailure { t: f64, h: f64 },
    #[error("acceleration vanishes, so every radius is admissible at this instant")]
    UnboundedFeasibility,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Molecule and fluid properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BBOParams {
    /// Molecule radius (m).
    pub r_m: f64,
    /// Molecule density (kg/m³).
    pub rho_m: f64,
    /// Fluid density (kg/m³).
    pub rho_f: f64,
    /// Dynamic viscosity (Pa·s).
    pub mu_f: f64,
    /// Molecule charge (C).
    pub q_a: f64,
}

impl Default for BBOParams {
    fn default() -> Self {
        Self { r_m: 1e-6, rho_m: 1e3, rho_f: 1e3, mu_f: 1e-3, q_a: 1.602_176_634e-19 }
    }
}

impl BBOParams {
    pub fn with_radius(self, r_m: f64) -> Self {
        Self { r_m, ..self }
    }

    pub fn validate(&self) -> Result<(), FluidError> {
        for (name, v) in [("r_m", self.r_m), ("rho_m", self.rho_m), ("rho_f", self.rho_f), ("mu_f", self.mu_f), ("q_a", self.q_a)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(FluidError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Stokes drag coefficient `f` (kg/s).
    pub fn drag(&self) -> f64 {
        6.0 * PI * self.mu_f * self.r_m
    }

    /// Inertia including added mass, `Γ` (kg).
    pub fn inertia(&self) -> f64 {
        2.0 / 3.0 * PI * self.r_m.powi(3) * (2.0 * self.rho_m + self.rho_f)
    }

    /// `Γ / f` (s).
    pub fn relaxation_time(&self) -> f64 {
        self.inertia() / self.drag()
    }

    fn rate(&self) -> f64 {
        self.drag() / self.inertia()
    }

    /// Field strength (V/m) that induces velocity `v` at steady state.
    pub fn field_strength(&self, v: f64) -> f64 {
        self.drag() / self.q_a * v
    }

    /// `u'(t)` given the forcing velocity and the molecule velocity.
    pub fn acceleration(&self, v: f64, u: f64) -> f64 {
        self.rate() * (v - u)
    }
}

/// Closed-form response to a sinusoidal field.
pub fn bbo_sinusoidal(bp: &BBOParams, p: &VelocityProfile, t: f64) -> Result<f64, FluidError> {
    let VelocityProfile::Sinusoidal { amplitude, offset, frequency, phase } = *p else {
        return Err(FluidError::GeneralFormUnsupported(p.variant_name()));
    };
    let (f, gamma) = (bp.drag(), bp.inertia());
    let w = TAU * frequency;
    let omega = gamma * amplitude * f / (f * f + (w * gamma).powi(2));
    let k = f * omega / gamma;
    let theta = w * t - phase;
    let steady = k * theta.sin() - w * omega * theta.cos() + offset;
    let transient = k * phase.sin() + w * omega * phase.cos() - offset;
    Ok(steady + transient * (-f * t / gamma).exp())
}

/// Closed-form response to the exponential field with `c1 = 0`, restarted
/// every period (the velocity carried over a restart decays at `f/Γ`).
pub fn bbo_exponential(bp: &BBOParams, p: &VelocityProfile, t: f64) -> Result<f64, FluidError> {
    let VelocityProfile::Exponential { c1, c2, lambda, period, .. } = *p else {
        return Err(FluidError::GeneralFormUnsupported(p.variant_name()));
    };
    if c1 != 0.0 {
        return Err(FluidError::GeneralFormUnsupported("exponential with c1 != 0"));
    }
    let a = bp.rate();
    let within = |s: f64| lambda * a * c2 * decay_difference(a, lambda, s);
    let periods = (t / period).floor().max(0.0);
    let mut s = t - periods * period;
    let mut carried = 0.0;
    let end_value = within(period);
    let carry_decay = (-a * period).exp();
    let mut k = 0.0;
    while k < periods {
        carried = carried * carry_decay + end_value;
        k += 1.0;
    }
    if s >= period {
        carried = carried * carry_decay + end_value;
        s -= period;
    }
    Ok(carried * (-a * s).exp() + within(s))
}

/// `(e^{−a t} − e^{−λ t}) / (a − λ)`, evaluated without cancellation and
/// with the limit `−t e^{−λ t}` at resonance.
fn decay_difference(a: f64, lambda: f64, t: f64) -> f64 {
    let (lo, hi) = if a <= lambda { (a, lambda) } else { (lambda, a) };
    if (a - lambda).abs() < RESONANCE_GAP * a {
        return -t * (-lambda * t).exp();
    }
    let gap = hi - lo;
    (-lo * t).exp() * (-gap * t).exp_m1() / gap
}

/// Closed-form response to a constant field.
pub fn bbo_constant(bp: &BBOParams, p: &VelocityProfile, t: f64) -> Result<f64, FluidError> {
    let VelocityProfile::Constant { velocity } = *p else {
        return Err(FluidError::GeneralFormUnsupported(p.variant_name()));
    };
    Ok(-velocity * (-bp.rate() * t).exp_m1())
}

/// Closed-form response for whichever variant has one.
pub fn bbo_analytic(bp: &BBOParams, p: &VelocityProfile, t: f64) -> Result<f64, FluidError> {
    match p {
        VelocityProfile::Constant { .. } => bbo_constant(bp, p, t),
        VelocityProfile::Sinusoidal { .. } => bbo_sinusoidal(bp, p, t),
        VelocityProfile::Exponential { .. } => bbo_exponential(bp, p, t),
        VelocityProfile::PiecewiseCustom { .. } => Err(FluidError::GeneralFormUnsupported("piecewise_custom")),
    }
}

/// Numerical solution with cubic Hermite interpolation between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(t, u, u')`; a restart time appears twice, once per side.
    nodes: Vec<(f64, f64, f64)>,
}

impl Trajectory {
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().map(|&(t, u, _)| (t, u))
    }

    pub fn end_time(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.0)
    }

    /// `u(t)` for `t` within the solved horizon (clamped outside it).
    pub fn at(&self, t: f64) -> f64 {
        let n = &self.nodes;
        if t <= n[0].0 {
            return n[0].1;
        }
        let i = n.partition_point(|node| node.0 < t);
        if i >= n.len() {
            return n[n.len() - 1].1;
        }
        let (t1, u1, d1) = n[i];
        let (t0, u0, d0) = n[i - 1];
        let h = t1 - t0;
        if h == 0.0 {
            return u1;
        }
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * u0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * u1 + (s3 - s2) * h * d1
    }
}

/// Integrate `u' = (f/Γ)(v − u)`, `u(0) = 0`, up to `t_end` at local
/// relative tolerance `tol`. Restarting profiles are integrated one
/// smooth piece at a time.
pub fn bbo_numeric(bp: &BBOParams, p: &VelocityProfile, t_end: f64, tol: f64) -> Result<Trajectory, FluidError> {
    bp.validate()?;
    if !(tol > 0.0) {
        return Err(FluidError::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    let a = bp.rate();
    let opts = OdeOptions { rel_tol: tol, abs_tol: tol * 1e-12, ..OdeOptions::default() };
    let mut nodes = Vec::new();
    let mut u = 0.0;
    for (start, pieces) in smooth_pieces(p, t_end) {
        for (s0, s1) in pieces {
            let v = |s: f64| p.velocity_in_period(s);
            let sol = dopri5(|s, y| a * (v(s) - y), s0, u, s1, opts).map_err(|e| match e {
                OdeError::StepUnderflow { t, h } => FluidError::StiffnessFailure { t: start + t, h },
                OdeError::StepBudget { t, .. } => FluidError::StiffnessFailure { t: start + t, h: 0.0 },
                other => FluidError::Ode(other),
            })?;
            for &(s, y) in &sol {
                nodes.push((start + s, y, a * (v(s) - y)));
            }
            u = sol.last().map_or(u, |n| n.1);
        }
    }
    if nodes.is_empty() {
        nodes.push((0.0, 0.0, a * p.velocity_at(0.0)));
    }
    Ok(Trajectory { nodes })
}

/// Local-time pieces `(offset, [(s0, s1)])` on which the forcing is smooth.
fn smooth_pieces(p: &VelocityProfile, t_end: f64) -> Vec<(f64, Vec<(f64, f64)>)> {
    let (period, inner): (f64, Vec<f64>) = match p {
        VelocityProfile::Exponential { period, .. } => (*period, Vec::new()),
        VelocityProfile::PiecewiseCustom { knots, period } => {
            (*period, knots.iter().map(|k| k.0).filter(|&t| t > 0.0 && t < *period).collect())
        }
        _ => return if t_end > 0.0 { vec![(0.0, vec![(0.0, t_end)])] } else { Vec::new() },
    };
    let mut out = Vec::new();
    let mut k = 0.0;
    while k * period < t_end {
        let start = k * period;
        let stop = (t_end - start).min(period);
        let mut cuts = vec![0.0];
        cuts.extend(inner.iter().copied().filter(|&c| c < stop));
        cuts.push(stop);
        out.push((start, cuts.windows(2).map(|w| (w[0], w[1])).collect()));
        k += 1.0;
    }
    out
}

/// Radius below which drag dominates inertia at an instant with molecule
/// velocity `u` and acceleration `dudt`.
pub fn radius_feasibility_bound(bp: &BBOParams, u: f64, dudt: f64) -> Result<f64, FluidError> {
    if dudt == 0.0 {
        return Err(FluidError::UnboundedFeasibility);
    }
    Ok((9.0 * bp.mu_f * u.abs() / ((2.0 * bp.rho_m + bp.rho_f) * dudt.abs())).sqrt())
}

/// `bound / r_m`; infinite when the acceleration vanishes.
pub fn feasibility_ratio(bp: &BBOParams, u: f64, dudt: f64) -> f64 {
    match radius_feasibility_bound(bp, u, dudt) {
        Ok(b) => b / bp.r_m,
        Err(_) => f64::INFINITY,
    }
}

/// Molecule velocity source: closed form when available, otherwise the
/// numerical trajectory.
enum Response<'a> {
    Analytic(&'a BBOParams, &'a VelocityProfile),
    Numeric(Trajectory),
}

impl Response<'_> {
    fn at(&self, t: f64) -> f64 {
        match self {
            Self::Analytic(bp, p) => bbo_analytic(bp, p, t).expect("variant checked"),
            Self::Numeric(tr) => tr.at(t),
        }
    }
}

/// Earliest `t ∈ (0, horizon]` at which the radius bound reaches
/// `factor · r_m`, or `None` if it never does.
pub fn time_to_feasibility(bp: &BBOParams, p: &VelocityProfile, horizon: f64, factor: f64) -> Result<Option<f64>, FluidError> {
    bp.validate()?;
    let response = match bbo_analytic(bp, p, 0.0) {
        Ok(_) => Response::Analytic(bp, p),
        Err(FluidError::GeneralFormUnsupported(_)) => Response::Numeric(bbo_numeric(bp, p, horizon, 1e-10)?),
        Err(e) => return Err(e),
    };
    let target = factor * bp.r_m;
    let satisfied = |t: f64| {
        let u = response.at(t);
        feasibility_ratio(bp, u, bp.acceleration(p.velocity_at(t), u)) * bp.r_m >= target
    };
    let step = horizon / FEASIBILITY_GRID as f64;
    let Some(i) = (1..=FEASIBILITY_GRID).find(|&i| satisfied(i as f64 * step)) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = ((i - 1) as f64 * step, i as f64 * step);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if satisfied(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `max |u − v| / max |v|` over `n` uniform samples of `[t_from, t_to]`.
pub fn tracking_deviation(
    bp: &BBOParams,
    p: &VelocityProfile,
    t_from: f64,
    t_to: f64,
    n: usize,
) -> Result<f64, FluidError> {
    let response = match bbo_analytic(bp, p, 0.0) {
        Ok(_) => Response::Analytic(bp, p),
        Err(FluidError::GeneralFormUnsupported(_)) => Response::Numeric(bbo_numeric(bp, p, t_to, 1e-10)?),
        Err(e) => return Err(e),
    };
    let (mut dev, mut peak) = (0.0f64, 0.0f64);
    for i in 0..n {
        let t = t_from + (t_to - t_from) * i as f64 / (n - 1).max(1) as f64;
        let v = p.velocity_at(t);
        dev = dev.max((response.at(t) - v).abs());
        peak = peak.max(v.abs());
    }
    Ok(if peak == 0.0 { 0.0 } else { dev / peak })
}

/// Hydrodynamic radius `k_B T / (6π μ_f D)` (m).
pub fn stokes_einstein_radius(diffusion: f64, temperature: f64, mu_f: f64) -> f64 {
    BOLTZMANN * temperature / (6.0 * PI * mu_f * diffusion)
}

/// Diffusion coefficient `k_B T / (6π μ_f r)` (m²/s).
pub fn stokes_einstein_diffusion(radius: f64, temperature: f64, mu_f: f64) -> f64 {
    BOLTZMANN * temperature / (6.0 * PI * mu_f * radius)
}
