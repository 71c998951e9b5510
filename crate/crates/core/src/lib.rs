//! Electrophoretic molecular communication toolkit.
//!
//! * [`field`]: velocity profiles and the sinusoidal / exponential field designers.
//! * [`channel`]: advection-diffusion concentration and expected receiver counts.
//! * [`detection`]: sampling schedule, matched weights, weighted-sum decisions and threshold search.
//! * [`mcsim`]: Poisson-level Monte Carlo BER estimation.
//! * [`fluiddyn`]: BBO molecule dynamics and radius feasibility checks.

// `!(x > 0.0)` is the NaN-rejecting form of a positivity check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detection;
pub mod field;
pub mod fluiddyn;
pub mod mcsim;
pub mod numerics;
pub mod rng;

pub use channel::{BitSequence, ChannelError, ChannelParams};
pub use detection::{DetectionError, DetectorConfig, FrameConfig, WeightRule};
pub use field::{design_exponential, design_sinusoidal, DesignConstraint, FieldError, VelocityProfile};
pub use fluiddyn::{BBOParams, FluidError};
pub use mcsim::{estimate_ber, BerReport, McError, SimulationConfig};
