//! Monte Carlo BER estimation with Poisson observations.
//!
//! Each trial draws a bit sequence, forms the per-sample means from a
//! precomputed table of single-emission contributions, draws one Poisson
//! count per sample and decodes every bit with the weighted-sum detector.
//! Trial `i` uses its own random stream, and error counts are integers, so
//! a report does not depend on how trials are spread over threads.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{expected_count_uniform, BitSequence, ChannelError, ChannelParams};
use crate::detection::{
    search_threshold, weighted_sum, weights_for, DetectionError, DetectorConfig, FrameConfig, LabelledSums,
    ThresholdSearch, WeightRule,
};
use crate::field::{FieldError, VelocityProfile};
pub use crate::rng::{EVALUATION_DOMAIN, TRAINING_DOMAIN};
use crate::rng::stream;

/// Minimum number of trials used to train an automatic threshold.
pub const MIN_TRAINING_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid Poisson mean {0}")]
    InvalidMean(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `len` independent Bernoulli(`p_one`) bits.
pub fn generate_sequence<R: Rng + ?Sized>(len: usize, p_one: f64, rng: &mut R) -> BitSequence {
    let bits = (0..len).map(|_| u8::from(rng.random::<f64>() < p_one)).collect();
    BitSequence::new(bits).expect("bits are 0 or 1")
}

/// One Poisson draw per mean.
pub fn simulate_observations<R: Rng + ?Sized>(means: &[f64], rng: &mut R) -> Result<Vec<u64>, McError> {
    let mut out = Vec::with_capacity(means.len());
    draw_into(means, rng, &mut out)?;
    Ok(out)
}

fn draw_into<R: Rng + ?Sized>(means: &[f64], rng: &mut R, out: &mut Vec<u64>) -> Result<(), McError> {
    out.clear();
    for &mean in means {
        let count = if mean == 0.0 {
            0
        } else {
            let dist = Poisson::new(mean).map_err(|_| McError::InvalidMean(mean))?;
            dist.sample(rng) as u64
        };
        out.push(count);
    }
    Ok(())
}

/// Single-emission contributions to every sample of a frame.
///
/// When the field repeats every bit interval the contribution of emission
/// `k` to interval `j` depends only on `j − k`, and a `B·M` template is
/// stored; otherwise the full lower-triangular table is kept.
#[derive(Debug, Clone)]
pub struct MeanTable {
    samples: usize,
    bits: usize,
    noise: f64,
    window: Option<usize>,
    periodic: bool,
    values: Vec<f64>,
}

impl MeanTable {
    pub fn new(ch: &ChannelParams, p: &VelocityProfile, frame: &FrameConfig, isi_window: Option<usize>) -> Self {
        let (b, m) = (frame.bits, frame.samples_per_bit);
        let t_int = frame.bit_interval;
        let periodic = p.repeats_every(t_int);
        let values = if periodic {
            let mut v = Vec::with_capacity(b * m);
            for lag in 0..b {
                for s in 1..=m {
                    v.push(expected_count_uniform(ch, p, lag as f64 * t_int + frame.offset(s), 0.0));
                }
            }
            v
        } else {
            let mut v = Vec::with_capacity(b * b * m);
            for j in 0..b {
                for k in 0..b {
                    for s in 1..=m {
                        let t = j as f64 * t_int + frame.offset(s);
                        v.push(if k <= j { expected_count_uniform(ch, p, t, k as f64 * t_int) } else { 0.0 });
                    }
                }
            }
            v
        };
        Self { samples: m, bits: b, noise: ch.noise_mean, window: isi_window, periodic, values }
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Contribution of emission `k` to sample `s` (0-based) of interval `j`.
    fn contribution(&self, j: usize, k: usize, s: usize) -> f64 {
        if self.periodic {
            self.values[(j - k) * self.samples + s]
        } else {
            self.values[(j * self.bits + k) * self.samples + s]
        }
    }

    /// Mean count of every sample, interval-major, for a transmitted
    /// sequence of the frame's length.
    pub fn sample_means(&self, bits: &BitSequence, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.bits * self.samples, self.noise);
        let ones: Vec<usize> = bits.as_slice().iter().enumerate().filter(|(_, &b)| b == 1).map(|(k, _)| k).collect();
        for j in 0..self.bits {
            let oldest = self.window.map_or(0, |w| (j + 1).saturating_sub(w.max(1)));
            let lo = ones.partition_point(|&k| k < oldest);
            let hi = ones.partition_point(|&k| k <= j);
            for &k in &ones[lo..hi] {
                for s in 0..self.samples {
                    out[j * self.samples + s] += self.contribution(j, k, s);
                }
            }
        }
    }
}

/// Source of transmitted sequences.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceMode {
    /// Fresh Bernoulli(P1) bits every trial.
    #[default]
    Random,
    /// The given pattern repeated cyclically up to the frame length.
    Fixed { pattern: BitSequence },
}

impl SequenceMode {
    fn draw<R: Rng + ?Sized>(&self, frame: &FrameConfig, rng: &mut R) -> BitSequence {
        match self {
            Self::Random => generate_sequence(frame.bits, frame.p_one, rng),
            Self::Fixed { pattern } => {
                let p = pattern.as_slice();
                BitSequence::new((0..frame.bits).map(|i| p[i % p.len()]).collect()).expect("pattern bits are valid")
            }
        }
    }
}

/// Detector used by a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    /// Weights from the channel, threshold trained by Monte Carlo search.
    Auto {
        #[serde(default)]
        weights: WeightRule,
    },
    /// Fixed weights and threshold.
    Explicit { weights: Vec<f64>, gamma: f64 },
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::Auto { weights: WeightRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub channel: ChannelParams,
    pub field: VelocityProfile,
    pub frame: FrameConfig,
    #[serde(default)]
    pub detector: DetectorSpec,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub sequence: SequenceMode,
    /// Number of most recent emissions that contribute to a sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isi_window: Option<usize>,
}

impl SimulationConfig {
    /// Reference channel and frame with an automatic detector.
    pub fn new(field: VelocityProfile, trials: usize, seed: u64) -> Self {
        Self {
            channel: ChannelParams::default(),
            field,
            frame: FrameConfig::reference(),
            detector: DetectorSpec::default(),
            trials,
            seed,
            sequence: SequenceMode::Random,
            isi_window: None,
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        self.channel.validate()?;
        self.field.validate()?;
        self.frame.validate()?;
        if self.trials == 0 {
            return Err(McError::InvalidConfig("trials must be at least 1".into()));
        }
        if let SequenceMode::Fixed { pattern } = &self.sequence {
            if pattern.is_empty() {
                return Err(McError::InvalidConfig("fixed sequence pattern is empty".into()));
            }
        }
        if self.isi_window == Some(0) {
            return Err(McError::InvalidConfig("isi_window must be at least 1".into()));
        }
        if let DetectorSpec::Explicit { weights, gamma } = &self.detector {
            DetectorConfig { weights: weights.clone(), gamma: *gamma }.validate(&self.frame)?;
        }
        Ok(())
    }
}

/// Error tally that merges associatively across trial batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BerTally {
    pub bit_errors: u64,
    pub bits_total: u64,
}

impl BerTally {
    pub fn merge(self, other: Self) -> Self {
        Self { bit_errors: self.bit_errors + other.bit_errors, bits_total: self.bits_total + other.bits_total }
    }

    pub fn ber(&self) -> f64 {
        if self.bits_total == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_total as f64
        }
    }

    /// 95% half-width: normal approximation, or Wilson below 30 errors.
    pub fn ci_halfwidth_95(&self) -> (f64, CiMethod) {
        const Z: f64 = 1.959_963_984_540_054;
        let n = self.bits_total as f64;
        if n == 0.0 {
            return (0.0, CiMethod::Normal);
        }
        let p = self.ber();
        if self.bit_errors >= 30 {
            (Z * (p * (1.0 - p) / n).sqrt(), CiMethod::Normal)
        } else {
            let z2 = Z * Z;
            let half = Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
            (half, CiMethod::Wilson)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    Wilson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub ber: f64,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ci_halfwidth_95: f64,
    pub ci_method: CiMethod,
    pub gamma_used: f64,
    pub weights: Vec<f64>,
    /// Training result when the threshold was searched.
    pub threshold_search: Option<ThresholdSearch>,
    pub field_variant: String,
    /// Average squared velocity of the field over one interval.
    pub xi_v: f64,
    pub config: SimulationConfig,
}

impl BerReport {
    pub const CSV_HEADER: &'static str = "field_variant,xi_v,T_int,M,trials,seed,gamma,ber,ci95";

    pub fn tally(&self) -> BerTally {
        BerTally { bit_errors: self.bit_errors, bits_total: self.bits_total }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{},{},{},{:?},{:?},{:?}",
            self.field_variant,
            self.xi_v,
            self.config.frame.bit_interval,
            self.config.frame.samples_per_bit,
            self.config.trials,
            self.config.seed,
            self.gamma_used,
            self.ber,
            self.ci_halfwidth_95
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Weighted sums of every decoded bit over `trials` trials of `domain`.
pub fn labelled_sums(
    table: &MeanTable,
    frame: &FrameConfig,
    weights: &[f64],
    sequence: &SequenceMode,
    trials: usize,
    seed: u64,
    domain: u64,
) -> LabelledSums {
    let per_trial: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(means, obs), trial| {
                let mut rng = stream(seed, domain, trial as u64);
                let bits = sequence.draw(frame, &mut rng);
                table.sample_means(&bits, means);
                draw_into(means, &mut rng, obs).expect("table means are non-negative");
                let (mut zeros, mut ones) = (Vec::new(), Vec::new());
                for (j, &b) in bits.as_slice().iter().enumerate() {
                    let m = frame.samples_per_bit;
                    let s = weighted_sum(&obs[j * m..(j + 1) * m], weights);
                    if b == 1 { ones.push(s) } else { zeros.push(s) }
                }
                (zeros, ones)
            },
        )
        .collect();
    let (zeros, ones): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_trial.into_iter().unzip();
    LabelledSums::new(zeros.concat(), ones.concat())
}

/// Threshold search on `max(trials, MIN_TRAINING_TRIALS)` training trials.
pub fn train_threshold(
    table: &MeanTable,
    frame: &FrameConfig,
    weights: &[f64],
    sequence: &SequenceMode,
    trials: usize,
    seed: u64,
) -> Result<ThresholdSearch, McError> {
    let n = trials.max(MIN_TRAINING_TRIALS);
    let sums = labelled_sums(table, frame, weights, sequence, n, seed, TRAINING_DOMAIN);
    Ok(search_threshold(&sums)?)
}

/// Bit errors over `trials` evaluation trials.
pub fn count_errors(
    table: &MeanTable,
    frame: &FrameConfig,
    detector: &DetectorConfig,
    sequence: &SequenceMode,
    trials: usize,
    seed: u64,
) -> BerTally {
    let m = frame.samples_per_bit;
    let errors: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(means, obs), trial| {
                let mut rng = stream(seed, EVALUATION_DOMAIN, trial as u64);
                let bits = sequence.draw(frame, &mut rng);
                table.sample_means(&bits, means);
                draw_into(means, &mut rng, obs).expect("table means are non-negative");
                bits.as_slice()
                    .iter()
                    .enumerate()
                    .filter(|&(j, &b)| {
                        let decided = weighted_sum(&obs[j * m..(j + 1) * m], &detector.weights) >= detector.gamma;
                        u8::from(decided) != b
                    })
                    .count() as u64
            },
        )
        .sum();
    BerTally { bit_errors: errors, bits_total: (trials * frame.bits) as u64 }
}

/// Estimate the BER of a configuration.
pub fn estimate_ber(cfg: &SimulationConfig) -> Result<BerReport, McError> {
    cfg.validate()?;
    let table = MeanTable::new(&cfg.channel, &cfg.field, &cfg.frame, cfg.isi_window);
    let (detector, search) = match &cfg.detector {
        DetectorSpec::Explicit { weights, gamma } => (DetectorConfig { weights: weights.clone(), gamma: *gamma }, None),
        DetectorSpec::Auto { weights: rule } => {
            let weights = weights_for(*rule, &cfg.channel, &cfg.field, &cfg.frame);
            let search = train_threshold(&table, &cfg.frame, &weights, &cfg.sequence, cfg.trials, cfg.seed)?;
            (DetectorConfig { weights, gamma: search.gamma }, Some(search))
        }
    };
    let tally = count_errors(&table, &cfg.frame, &detector, &cfg.sequence, cfg.trials, cfg.seed);
    let (ci, method) = tally.ci_halfwidth_95();
    Ok(BerReport {
        ber: tally.ber(),
        bit_errors: tally.bit_errors,
        bits_total: tally.bits_total,
        ci_halfwidth_95: ci,
        ci_method: method,
        gamma_used: detector.gamma,
        weights: detector.weights,
        threshold_search: search,
        field_variant: cfg.field.variant_name().to_string(),
        xi_v: cfg.field.average_power(cfg.frame.bit_interval),
        config: cfg.clone(),
    })
}
