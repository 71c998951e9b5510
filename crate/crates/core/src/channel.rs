//! Advection-diffusion channel between a point transmitter at `(−x0, 0, 0)`
//! and a passive spherical receiver centred at the origin.
//!
//! An impulsive emission of `N_EM` molecules at `t0` spreads as a Gaussian
//! of variance `2 D_A (t − t0)` per axis whose centre is carried along by
//! the field. The expected receiver count is either the centre
//! concentration times the receiver volume (uniform-concentration
//! approximation) or the exact volume integral.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::FrameConfig;
use crate::field::{FieldError, VelocityProfile};
use crate::numerics::quadrature::{integrate, QuadError, QuadOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("concentration is a point impulse at t = t0 on the source point")]
    SingularTime,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("invalid bit sequence: {0}")]
    InvalidBits(String),
}

/// Geometry and transport constants of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Transmitter-receiver distance (m).
    pub x0: f64,
    /// Receiver radius (m).
    pub r_obs: f64,
    /// Diffusion coefficient `D_A` (m²/s).
    pub diffusion: f64,
    /// Molecules released per emitted 1.
    pub n_em: f64,
    /// Expected noise molecules observed per sample.
    pub noise_mean: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { x0: 5e-7, r_obs: 5e-8, diffusion: 1e-9, n_em: 1e4, noise_mean: 1.0 }
    }
}

impl ChannelParams {
    /// Receiver volume `4π r_obs³ / 3`.
    pub fn receiver_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.r_obs.powi(3)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [("x0", self.x0), ("r_obs", self.r_obs), ("diffusion", self.diffusion)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ChannelError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("n_em", self.n_em), ("noise_mean", self.noise_mean)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ChannelError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Position of the centre of a group emitted at `t0`, at time `t`.
    pub fn group_centre(&self, p: &VelocityProfile, t: f64, t0: f64) -> Result<[f64; 3], ChannelError> {
        Ok([-self.x0 + p.displacement(t0, t)?, 0.0, 0.0])
    }

    fn gaussian(&self, tau: f64, dist_sq: f64) -> f64 {
        let spread = 4.0 * self.diffusion * tau;
        self.n_em / (PI * spread).powf(1.5) * (-dist_sq / spread).exp()
    }
}

/// Binary sequence of `B` bits, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitSequence(Vec<u8>);

impl BitSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self, ChannelError> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(ChannelError::InvalidBits(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn ones_count(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl TryFrom<Vec<u8>> for BitSequence {
    type Error = ChannelError;
    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BitSequence> for Vec<u8> {
    fn from(b: BitSequence) -> Self {
        b.0
    }
}

/// Expected concentration (molecules/m³) at `pos` and time `t` due to one
/// emission at `t0`.
pub fn expected_concentration(
    ch: &ChannelParams,
    p: &VelocityProfile,
    pos: [f64; 3],
    t: f64,
    t0: f64,
) -> Result<f64, ChannelError> {
    let centre = ch.group_centre(p, t, t0)?;
    let dist_sq: f64 = pos.iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum();
    if t == t0 {
        return if dist_sq == 0.0 { Err(ChannelError::SingularTime) } else { Ok(0.0) };
    }
    Ok(ch.gaussian(t - t0, dist_sq))
}

/// Distance between the receiver centre and the centre of a group emitted
/// at `t0`.
pub fn effective_distance(ch: &ChannelParams, p: &VelocityProfile, t: f64, t0: f64) -> Result<f64, ChannelError> {
    Ok((ch.x0 - p.displacement(t0, t)?).abs())
}

/// Expected number of molecules inside the receiver under the
/// uniform-concentration approximation; zero for `t <= t0`.
pub fn expected_count_uniform(ch: &ChannelParams, p: &VelocityProfile, t: f64, t0: f64) -> f64 {
    if t <= t0 {
        return 0.0;
    }
    let d = ch.x0 - p.displacement(t0, t).unwrap_or(0.0);
    ch.receiver_volume() * ch.gaussian(t - t0, d * d)
}

/// Expected number of molecules inside the receiver, integrating the
/// concentration over the receiver sphere; zero for `t <= t0`.
pub fn expected_count_integrated(ch: &ChannelParams, p: &VelocityProfile, t: f64, t0: f64) -> Result<f64, ChannelError> {
    if t <= t0 {
        return Ok(0.0);
    }
    let d = effective_distance(ch, p, t, t0)?;
    ball_integral(ch, t - t0, d, ch.r_obs, 1e-6)
}

/// Expected number of molecules of one emission inside an arbitrary ball.
pub fn molecules_in_ball(
    ch: &ChannelParams,
    p: &VelocityProfile,
    centre: [f64; 3],
    radius: f64,
    t: f64,
    t0: f64,
    rel_tol: f64,
) -> Result<f64, ChannelError> {
    if t <= t0 {
        let c = ch.group_centre(p, t0, t0)?;
        let inside = centre.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius;
        return Ok(if inside { ch.n_em } else { 0.0 });
    }
    let group = ch.group_centre(p, t, t0)?;
    let sep = centre.iter().zip(group).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    ball_integral(ch, t - t0, sep, radius, rel_tol)
}

/// Integral of the spread Gaussian over a ball of `radius` whose centre is
/// `sep` away from the Gaussian's centre, as a nested radial × polar rule
/// (the azimuth contributes 2π by symmetry about the separation axis).
fn ball_integral(ch: &ChannelParams, tau: f64, sep: f64, radius: f64, rel_tol: f64) -> Result<f64, ChannelError> {
    let spread = 4.0 * ch.diffusion * tau;
    let norm = ch.n_em / (PI * spread).powf(1.5);
    let inner_opts = QuadOptions { abs_tol: 0.0, rel_tol: rel_tol * 1e-3, max_subdivisions: 500 };
    let outer_opts = QuadOptions { abs_tol: 0.0, rel_tol: rel_tol * 0.1, max_subdivisions: 500 };
    let mut failure = None;
    let shell = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        let polar = |theta: f64| {
            let d2 = sep * sep + r * r - 2.0 * sep * r * theta.cos();
            theta.sin() * (-d2.max(0.0) / spread).exp()
        };
        match integrate(polar, 0.0, PI, inner_opts) {
            Ok(est) => 2.0 * PI * r * r * est.value,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let outer = integrate(shell, 0.0, radius, outer_opts)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(norm * outer.value)
}

/// Expected observed count at time `t` for a whole bit sequence: noise
/// plus every past emission of a 1 (emission `j` at `(j−1)·T_int`).
pub fn expected_signal(ch: &ChannelParams, p: &VelocityProfile, frame: &FrameConfig, bits: &BitSequence, t: f64) -> f64 {
    expected_signal_windowed(ch, p, frame, bits, t, None)
}

/// As [`expected_signal`], but only the `window` most recent emissions
/// (including the current one) contribute when a window is given.
pub fn expected_signal_windowed(
    ch: &ChannelParams,
    p: &VelocityProfile,
    frame: &FrameConfig,
    bits: &BitSequence,
    t: f64,
    window: Option<usize>,
) -> f64 {
    // emissions at (or within rounding of) t have not contributed yet, so
    // an interval-end sample is windowed with the interval it closes
    let emitted = (((t / frame.bit_interval) * (1.0 - 1e-12)).ceil().max(0.0) as usize).min(bits.len());
    if emitted == 0 {
        return ch.noise_mean;
    }
    let t_int = frame.bit_interval;
    let newest = emitted - 1;
    let oldest = window.map_or(0, |w| (newest + 1).saturating_sub(w.max(1)));
    let mut mean = ch.noise_mean;
    for j in oldest..=newest {
        if bits.as_slice()[j] == 1 {
            mean += expected_count_uniform(ch, p, t, j as f64 * t_int);
        }
    }
    mean
}
