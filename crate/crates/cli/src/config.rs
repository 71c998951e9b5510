//! Experiment configuration: one JSON document, unknown keys rejected,
//! every block except `field` defaulting to the reference system.

use std::path::{Path, PathBuf};

use ephoresim::channel::{BitSequence, ChannelParams};
use ephoresim::detection::FrameConfig;
use ephoresim::field::{design_exponential, design_sinusoidal, DesignConstraint, FieldError, VelocityProfile};
use ephoresim::fluiddyn::{BBOParams, DOMINANCE_FACTOR};
use ephoresim::mcsim::{DetectorSpec, SequenceMode, SimulationConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub frame: FrameConfig,
    pub field: FieldSpec,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub signal: SignalBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub bbo: BboBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Field selection: designer inputs or an explicit profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Constant velocity, given directly or as `√ξ_v`.
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi_v: Option<f64>,
    },
    /// `A = DC` sinusoid spending `xi_v`; the phase is designed unless given.
    Sinusoidal {
        xi_v: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<f64>,
    },
    /// Power-optimal exponential field ending at `x1` (default `x0`).
    Exponential {
        xi_v: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x1: Option<f64>,
    },
    /// Piecewise-linear velocity knots repeated every `period`.
    PiecewiseCustom { knots: Vec<(f64, f64)>, period: f64 },
}

impl FieldSpec {
    pub fn resolve(&self, ch: &ChannelParams, frame: &FrameConfig) -> Result<VelocityProfile, CliError> {
        let profile = match self {
            Self::Constant { velocity: Some(v), xi_v: None } => VelocityProfile::constant(*v),
            Self::Constant { velocity: None, xi_v: Some(xi) } => {
                if !(*xi >= 0.0) {
                    return Err(CliError::Config(format!("field.xi_v must be non-negative, got {xi}")));
                }
                VelocityProfile::constant(xi.sqrt())
            }
            Self::Constant { .. } => {
                return Err(CliError::Config("constant field needs exactly one of velocity or xi_v".into()))
            }
            Self::Sinusoidal { xi_v, phase: Some(phase) } => {
                VelocityProfile::sinusoid_for_budget(*xi_v, frame.bit_interval, *phase)
            }
            Self::Sinusoidal { xi_v, phase: None } => {
                design_sinusoidal(&DesignConstraint::new(*xi_v, frame.bit_interval, ch.x0)).map_err(field_error)?
            }
            Self::Exponential { xi_v, x1 } => design_exponential(
                &DesignConstraint::new(*xi_v, frame.bit_interval, ch.x0).with_final_position(x1.unwrap_or(ch.x0)),
            )
            .map_err(field_error)?,
            Self::PiecewiseCustom { knots, period } => {
                VelocityProfile::PiecewiseCustom { knots: knots.clone(), period: *period }
            }
        };
        profile.validate().map_err(field_error)?;
        Ok(profile)
    }

    fn set_xi(&mut self, value: f64) -> Result<(), CliError> {
        match self {
            Self::Constant { velocity, xi_v } => {
                *velocity = None;
                *xi_v = Some(value);
            }
            Self::Sinusoidal { xi_v, .. } | Self::Exponential { xi_v, .. } => *xi_v = value,
            Self::PiecewiseCustom { .. } => {
                return Err(CliError::Config("xi_v cannot be swept for a piecewise_custom field".into()))
            }
        }
        Ok(())
    }
}

pub fn field_error(e: FieldError) -> CliError {
    match e {
        FieldError::InvalidConstraint(_) | FieldError::InvalidProfile(_) => CliError::Config(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub trials: usize,
    pub seed: u64,
    pub sequence: SequenceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isi_window: Option<usize>,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self { trials: 10_000, seed: 1, sequence: SequenceMode::Random, isi_window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalBlock {
    /// Transmitted bits of the trace.
    pub bits: BitSequence,
    /// Grid points per bit interval.
    pub points_per_interval: usize,
    /// Extra fields traced next to the main one.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<FieldSpec>,
}

impl Default for SignalBlock {
    fn default() -> Self {
        Self { bits: BitSequence::new(vec![0, 1, 1, 0, 0, 1, 0]).expect("valid bits"), points_per_interval: 100, compare: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "T_int")]
    TInt,
    #[serde(rename = "xi_v")]
    XiV,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "trials")]
    Trials,
    #[serde(rename = "N_EM")]
    NEm,
    #[serde(rename = "x0")]
    X0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BboBlock {
    /// Fluid and molecule properties; `r_m` is replaced by each radius.
    pub fluid: BBOParams,
    pub radii: Vec<f64>,
    /// Trajectory horizon (s); one bit interval when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub points: usize,
    /// Required margin of the radius bound over `r_m`.
    pub factor: f64,
    /// Local relative tolerance of the numerical integrator.
    pub tolerance: f64,
}

impl Default for BboBlock {
    fn default() -> Self {
        Self {
            fluid: BBOParams::default(),
            radii: vec![1e-7, 1e-6, 5e-6, 1e-5],
            horizon: None,
            points: 1000,
            factor: DOMINANCE_FACTOR,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: PathBuf::from("runs"), formats: vec![Format::Csv, Format::Json] }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.channel.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.frame.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.simulation.trials == 0 {
            return Err(CliError::Config("simulation.trials must be at least 1".into()));
        }
        if self.signal.points_per_interval == 0 {
            return Err(CliError::Config("signal.points_per_interval must be at least 1".into()));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats must name at least one format".into()));
        }
        if self.bbo.points < 2 {
            return Err(CliError::Config("bbo.points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        Ok(SimulationConfig {
            channel: self.channel,
            field: self.field.resolve(&self.channel, &self.frame)?,
            frame: self.frame,
            detector: self.detector.clone(),
            trials: self.simulation.trials,
            seed: self.simulation.seed,
            sequence: self.simulation.sequence.clone(),
            isi_window: self.simulation.isi_window,
        })
    }

    /// Copy of the config with one sweep parameter replaced.
    pub fn with_parameter(&self, p: SweepParameter, value: f64) -> Result<Self, CliError> {
        let mut c = self.clone();
        let count = |v: f64, name: &str| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!("sweep value {v} for {name} must be a positive integer")))
            }
        };
        match p {
            SweepParameter::TInt => c.frame.bit_interval = value,
            SweepParameter::XiV => c.field.set_xi(value)?,
            SweepParameter::M => c.frame.samples_per_bit = count(value, "M")?,
            SweepParameter::Trials => c.simulation.trials = count(value, "trials")?,
            SweepParameter::NEm => c.channel.n_em = value,
            SweepParameter::X0 => c.channel.x0 = value,
        }
        if let Some(ts) = c.frame.sampling_period {
            if p == SweepParameter::TInt || p == SweepParameter::M {
                return Err(CliError::Config(format!(
                    "frame.sampling_period = {ts} is fixed; remove it to sweep {p:?}"
                )));
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<ExperimentConfig, serde_json::Error> {
        serde_json::from_str(json)
    }

    #[test]
    fn defaults_are_reference_system() {
        let c = parse(r#"{"field": {"variant": "sinusoidal", "xi_v": 1e-4}}"#).unwrap();
        assert_eq!(c.channel, ChannelParams::default());
        assert_eq!(c.frame, FrameConfig::reference());
        assert_eq!(c.simulation.trials, 10_000);
        assert_eq!(c.signal.bits.as_slice(), &[0, 1, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn field_block_is_required_and_strict() {
        assert!(parse("{}").is_err());
        assert!(parse(r#"{"field": {"variant": "sinusoidal"}}"#).is_err());
        assert!(parse(r#"{"field": {"variant": "sinusoidal", "xi_v": 1e-4, "xi": 1}}"#).is_err());
        assert!(parse(r#"{"field": {"variant": "sinusoidal", "xi_v": 1e-4}, "chanel": {}}"#).is_err());
        assert!(parse(r#"{"field": {"variant": "sinusoidal", "xi_v": 1e-4}, "channel": {"x_0": 1}}"#).is_err());
    }

    #[test]
    fn constant_field_forms() {
        let ch = ChannelParams::default();
        let f = FrameConfig::reference();
        let by_xi = FieldSpec::Constant { velocity: None, xi_v: Some(1e-4) };
        assert_eq!(by_xi.resolve(&ch, &f).unwrap(), VelocityProfile::constant(0.01));
        let both = FieldSpec::Constant { velocity: Some(0.01), xi_v: Some(1e-4) };
        assert!(matches!(both.resolve(&ch, &f), Err(CliError::Config(_))));
    }

    #[test]
    fn infeasible_design_is_numerical() {
        let ch = ChannelParams::default();
        let f = FrameConfig::reference();
        let spec = FieldSpec::Sinusoidal { xi_v: 1e-6, phase: None };
        assert!(matches!(spec.resolve(&ch, &f), Err(CliError::Numerical(_))));
    }

    #[test]
    fn sweep_parameters_apply() {
        let c = parse(r#"{"field": {"variant": "constant", "velocity": 0.01}}"#).unwrap();
        assert_eq!(c.with_parameter(SweepParameter::M, 3.0).unwrap().frame.samples_per_bit, 3);
        assert!(c.with_parameter(SweepParameter::M, 2.5).is_err());
        let xi = c.with_parameter(SweepParameter::XiV, 4e-4).unwrap();
        assert_eq!(xi.field.resolve(&xi.channel, &xi.frame).unwrap(), VelocityProfile::constant(0.02));
        assert_eq!(c.with_parameter(SweepParameter::NEm, 1e5).unwrap().channel.n_em, 1e5);
        assert!(serde_json::from_str::<SweepParameter>(r#""B""#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(r#"{"field": {"variant": "exponential", "xi_v": 1e-4}, "sweep": {"parameter": "T_int", "values": [1e-4]}}"#)
            .unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
