//! Sampling schedule, detector weights, the weighted-sum decision rule and
//! the threshold search.
//!
//! Interval `j` (1-based) is sampled at `(j−1)·T_int + m·t_s` for
//! `m = 1..M`, so the samples of a bit lie in the same window as its
//! emission. A bit is decoded as 1 when `Σ ω_m s_m ≥ γ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{expected_count_uniform, expected_signal, BitSequence, ChannelParams};
use crate::field::VelocityProfile;
use crate::mcsim::{self, McError, MeanTable, SequenceMode};

/// Number of grid points in the coarse threshold scan.
pub const THRESHOLD_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("interval index {j} outside 1..={bits}")]
    IndexOutOfRange { j: usize, bits: usize },
    #[error("expected {expected} observations, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("threshold search did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
}

/// Framing of the transmission: interval length, sequence length, prior
/// and sampling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    /// Bit interval `T_int` (s).
    pub bit_interval: f64,
    /// Sequence length `B`.
    pub bits: usize,
    /// Probability of a 1.
    pub p_one: f64,
    /// Samples per interval `M`.
    pub samples_per_bit: usize,
    /// Sampling period `t_s` (s); `T_int / M` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling_period: Option<f64>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl FrameConfig {
    pub fn reference() -> Self {
        Self { bit_interval: 1e-4, bits: 100, p_one: 0.5, samples_per_bit: 5, sampling_period: None }
    }

    pub fn sampling_period(&self) -> f64 {
        self.sampling_period.unwrap_or(self.bit_interval / self.samples_per_bit as f64)
    }

    /// In-interval offset `g(m) = m·t_s` of sample `m` (1-based).
    pub fn offset(&self, m: usize) -> f64 {
        m as f64 * self.sampling_period()
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.bit_interval.is_finite() && self.bit_interval > 0.0) {
            return Err(DetectionError::InvalidFrame(format!("bit_interval must be positive, got {}", self.bit_interval)));
        }
        if self.bits == 0 {
            return Err(DetectionError::InvalidFrame("bits must be at least 1".into()));
        }
        if self.samples_per_bit == 0 {
            return Err(DetectionError::InvalidFrame("samples_per_bit must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_one) {
            return Err(DetectionError::InvalidFrame(format!("p_one must lie in [0, 1], got {}", self.p_one)));
        }
        if let Some(ts) = self.sampling_period {
            let last = ts * self.samples_per_bit as f64;
            if !(ts > 0.0 && last <= self.bit_interval * (1.0 + 1e-12)) {
                return Err(DetectionError::InvalidFrame(format!(
                    "sampling_period {ts} must be positive with M·t_s <= bit_interval"
                )));
            }
        }
        Ok(())
    }
}

/// Weights `ω_1..ω_M` and threshold `γ` of the weighted-sum detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub weights: Vec<f64>,
    pub gamma: f64,
}

impl DetectorConfig {
    pub fn validate(&self, frame: &FrameConfig) -> Result<(), DetectionError> {
        if self.weights.len() != frame.samples_per_bit {
            return Err(DetectionError::LengthMismatch { expected: frame.samples_per_bit, got: self.weights.len() });
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DetectionError::InvalidDetector("weights must be finite and non-negative".into()));
        }
        if !self.gamma.is_finite() {
            return Err(DetectionError::InvalidDetector(format!("gamma must be finite, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// How detector weights are derived from the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Mean count of a lone emission at the interval start, plus noise.
    #[default]
    SingleEmission,
    /// Mean count in the last interval of an all-ones pilot sequence.
    AllOnesPilot,
    /// Every sample weighted 1.
    Equal,
}

/// Sample times of interval `j` (1-based).
pub fn sample_times(frame: &FrameConfig, j: usize) -> Result<Vec<f64>, DetectionError> {
    if j == 0 || j > frame.bits {
        return Err(DetectionError::IndexOutOfRange { j, bits: frame.bits });
    }
    let start = (j - 1) as f64 * frame.bit_interval;
    Ok((1..=frame.samples_per_bit).map(|m| start + frame.offset(m)).collect())
}

/// Matched-filter weights from the single-emission template.
pub fn matched_weights(ch: &ChannelParams, p: &VelocityProfile, frame: &FrameConfig) -> Vec<f64> {
    weights_for(WeightRule::SingleEmission, ch, p, frame)
}

pub fn weights_for(rule: WeightRule, ch: &ChannelParams, p: &VelocityProfile, frame: &FrameConfig) -> Vec<f64> {
    let m_range = 1..=frame.samples_per_bit;
    match rule {
        WeightRule::SingleEmission => {
            m_range.map(|m| expected_count_uniform(ch, p, frame.offset(m), 0.0) + ch.noise_mean).collect()
        }
        WeightRule::AllOnesPilot => {
            let pilot = BitSequence::ones(frame.bits);
            let start = (frame.bits - 1) as f64 * frame.bit_interval;
            m_range.map(|m| expected_signal(ch, p, frame, &pilot, start + frame.offset(m))).collect()
        }
        WeightRule::Equal => vec![1.0; frame.samples_per_bit],
    }
}

/// `Σ ω_m s_m`, accumulated in sample order.
pub fn weighted_sum(observations: &[u64], weights: &[f64]) -> f64 {
    observations.iter().zip(weights).fold(0.0, |acc, (&s, &w)| acc + w * s as f64)
}

/// Decode one bit: 1 iff the weighted sum reaches `γ`.
pub fn decide(observations: &[u64], d: &DetectorConfig) -> Result<u8, DetectionError> {
    if observations.len() != d.weights.len() {
        return Err(DetectionError::LengthMismatch { expected: d.weights.len(), got: observations.len() });
    }
    Ok(u8::from(weighted_sum(observations, &d.weights) >= d.gamma))
}

/// Weighted sums of decoded bits split by the transmitted value, sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelledSums {
    zeros: Vec<f64>,
    ones: Vec<f64>,
}

impl LabelledSums {
    pub fn new(mut zeros: Vec<f64>, mut ones: Vec<f64>) -> Self {
        zeros.sort_by(f64::total_cmp);
        ones.sort_by(f64::total_cmp);
        Self { zeros, ones }
    }

    pub fn len(&self) -> usize {
        self.zeros.len() + self.ones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decision errors made with threshold `gamma`.
    pub fn errors_at(&self, gamma: f64) -> usize {
        let missed = self.ones.partition_point(|&s| s < gamma);
        let false_alarms = self.zeros.len() - self.zeros.partition_point(|&s| s < gamma);
        missed + false_alarms
    }

    pub fn max_sum(&self) -> f64 {
        let top = |v: &[f64]| v.last().copied().unwrap_or(0.0);
        top(&self.zeros).max(top(&self.ones))
    }
}

/// Outcome of a threshold search on a fixed set of realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub gamma: f64,
    pub errors: usize,
    pub bits: usize,
    pub ber: f64,
}

/// Grid scan over `[0, max sum]` followed by golden-section refinement
/// around the best grid point.
pub fn search_threshold(sums: &LabelledSums) -> Result<ThresholdSearch, DetectionError> {
    if sums.is_empty() {
        return Err(DetectionError::NonConvergence("no training decisions".into()));
    }
    let hi = sums.max_sum() * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    let step = hi / (THRESHOLD_GRID - 1) as f64;
    let grid: Vec<f64> = (0..THRESHOLD_GRID).map(|i| i as f64 * step).collect();
    let errors: Vec<usize> = grid.par_iter().map(|&g| sums.errors_at(g)).collect();
    if errors.iter().all(|&e| e == errors[0]) {
        return Err(DetectionError::NonConvergence(format!(
            "error count {} is flat over the threshold range",
            errors[0]
        )));
    }
    let (best_i, &best_e) = errors.iter().enumerate().min_by_key(|&(_, e)| *e).expect("non-empty grid");
    let mut best = (grid[best_i], best_e);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(THRESHOLD_GRID - 1)];
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut ec, mut ed) = (sums.errors_at(c), sums.errors_at(d));
    while b - a > 1e-12 * hi {
        if ec <= ed {
            b = d;
            d = c;
            ed = ec;
            c = b - inv_phi * (b - a);
            ec = sums.errors_at(c);
        } else {
            a = c;
            c = d;
            ec = ed;
            d = a + inv_phi * (b - a);
            ed = sums.errors_at(d);
        }
    }
    let refined = 0.5 * (a + b);
    let refined_e = sums.errors_at(refined);
    if refined_e < best.1 {
        best = (refined, refined_e);
    }
    Ok(ThresholdSearch { gamma: best.0, errors: best.1, bits: sums.len(), ber: best.1 as f64 / sums.len() as f64 })
}

/// Threshold minimizing the Monte Carlo BER of the matched-weight detector
/// over `trials` random sequences; every candidate sees the same
/// realizations.
pub fn optimize_threshold(
    ch: &ChannelParams,
    p: &VelocityProfile,
    frame: &FrameConfig,
    trials: usize,
    seed: u64,
) -> Result<ThresholdSearch, McError> {
    let weights = matched_weights(ch, p, frame);
    let table = MeanTable::new(ch, p, frame, None);
    mcsim::train_threshold(&table, frame, &weights, &SequenceMode::Random, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{design_sinusoidal, DesignConstraint};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_sample_times() {
        let f = FrameConfig::reference();
        let t = sample_times(&f, 1).unwrap();
        for (got, want) in t.iter().zip([0.2e-4, 0.4e-4, 0.6e-4, 0.8e-4, 1.0e-4]) {
            assert_relative_eq!(*got, want, max_relative = 1e-14);
        }
    }

    #[test]
    fn single_sample_at_interval_end() {
        let f = FrameConfig { samples_per_bit: 1, ..FrameConfig::reference() };
        let t = sample_times(&f, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_relative_eq!(t[0], 3e-4, max_relative = 1e-14);
    }

    #[test]
    fn consecutive_intervals_tile_the_axis() {
        let f = FrameConfig::reference();
        let a = sample_times(&f, 1).unwrap();
        let b = sample_times(&f, 2).unwrap();
        assert_relative_eq!(b[0] - a[4], f.sampling_period(), max_relative = 1e-9);
        assert!(a.last() < b.first());
    }

    #[test]
    fn interval_index_is_checked() {
        let f = FrameConfig::reference();
        assert_eq!(sample_times(&f, 0), Err(DetectionError::IndexOutOfRange { j: 0, bits: 100 }));
        assert!(sample_times(&f, 101).is_err());
        assert!(sample_times(&f, 100).is_ok());
    }

    #[test]
    fn frame_validation() {
        assert!(FrameConfig::reference().validate().is_ok());
        assert!(FrameConfig { p_one: 1.5, ..FrameConfig::reference() }.validate().is_err());
        assert!(FrameConfig { samples_per_bit: 0, ..FrameConfig::reference() }.validate().is_err());
        assert!(FrameConfig { sampling_period: Some(3e-5), ..FrameConfig::reference() }.validate().is_err());
        assert!(FrameConfig { sampling_period: Some(1e-5), ..FrameConfig::reference() }.validate().is_ok());
    }

    #[test]
    fn weights_are_positive_with_noise() {
        let ch = ChannelParams::default();
        let p = design_sinusoidal(&DesignConstraint::new(1e-4, 1e-4, 5e-7)).unwrap();
        let w = matched_weights(&ch, &p, &FrameConfig::reference());
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn weights_follow_the_single_emission_template() {
        let ch = ChannelParams::default();
        let f = FrameConfig::reference();
        let p = design_sinusoidal(&DesignConstraint::new(1e-4, 1e-4, 5e-7)).unwrap();
        let w = matched_weights(&ch, &p, &f);
        for (m, wm) in w.iter().enumerate() {
            assert_eq!(*wm, 1.0 + expected_count_uniform(&ch, &p, (m + 1) as f64 * 2e-5, 0.0));
        }
        // The designed group parks on the receiver at 5.57e-5 s, but the
        // 2e-5 s sample sees a tighter, closer cloud and collects more.
        let argmax = |w: &[f64]| (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap() + 1;
        assert_eq!(argmax(&w), 1);
        assert!(w[2] > w[3] && w[2] > w[4]);
        let constant = matched_weights(&ch, &VelocityProfile::constant(0.01), &f);
        // 4e-5 s sits just before the 5e-5 s crossing; at 6e-5 s the cloud has
        // passed and spread further.
        assert_eq!(argmax(&constant), 2);
        assert!(constant[2] > constant[3]);
    }

    #[test]
    fn pilot_and_equal_weights() {
        let ch = ChannelParams::default();
        let f = FrameConfig::reference();
        let p = VelocityProfile::constant(0.01);
        let single = weights_for(WeightRule::SingleEmission, &ch, &p, &f);
        let pilot = weights_for(WeightRule::AllOnesPilot, &ch, &p, &f);
        assert!(pilot.iter().zip(&single).all(|(a, b)| a >= b));
        assert_eq!(weights_for(WeightRule::Equal, &ch, &p, &f), vec![1.0; 5]);
    }

    #[test]
    fn decision_examples() {
        let d = DetectorConfig { weights: vec![1.0, 2.0, 3.0, 2.0, 1.0], gamma: 6.0 };
        assert_eq!(decide(&[0, 1, 0, 2, 0], &d), Ok(1));
        assert_eq!(decide(&[0; 5], &d), Ok(0));
        let zero = DetectorConfig { gamma: 0.0, ..d.clone() };
        assert_eq!(decide(&[0; 5], &zero), Ok(1));
        assert_eq!(decide(&[0; 4], &d), Err(DetectionError::LengthMismatch { expected: 5, got: 4 }));
    }

    #[test]
    fn detector_validation() {
        let f = FrameConfig::reference();
        assert!(DetectorConfig { weights: vec![1.0; 5], gamma: 2.0 }.validate(&f).is_ok());
        assert!(DetectorConfig { weights: vec![1.0; 4], gamma: 2.0 }.validate(&f).is_err());
        assert!(DetectorConfig { weights: vec![1.0, -1.0, 1.0, 1.0, 1.0], gamma: 2.0 }.validate(&f).is_err());
    }

    #[test]
    fn labelled_error_counts() {
        let s = LabelledSums::new(vec![0.0, 1.0, 2.0], vec![1.5, 3.0, 4.0]);
        assert_eq!(s.errors_at(0.0), 3);
        assert_eq!(s.errors_at(1.2), 1);
        assert_eq!(s.errors_at(1.5), 1);
        assert_eq!(s.errors_at(2.5), 1);
        assert_eq!(s.errors_at(10.0), 3);
    }

    #[test]
    fn search_finds_separating_gap() {
        let s = LabelledSums::new(vec![0.0, 1.0, 2.0, 2.5], vec![3.0, 4.0, 5.0]);
        let r = search_threshold(&s).unwrap();
        assert_eq!(r.errors, 0);
        assert!(r.gamma > 2.5 && r.gamma <= 3.0);
    }

    #[test]
    fn flat_error_surface_is_reported() {
        let s = LabelledSums::new(vec![], vec![]);
        assert!(matches!(search_threshold(&s), Err(DetectionError::NonConvergence(_))));
        let all_zero = LabelledSums::new(vec![0.0; 10], vec![0.0; 10]);
        assert!(matches!(search_threshold(&all_zero), Err(DetectionError::NonConvergence(_))));
    }

    #[test]
    fn constant_field_threshold_is_near_best_grid_point() {
        let ch = ChannelParams::default();
        let f = FrameConfig::reference();
        let p = VelocityProfile::constant(0.01);
        let trials = 1000;
        let found = optimize_threshold(&ch, &p, &f, trials, 11).unwrap();
        // oracle: exhaustive fine grid on the same realizations
        let w = matched_weights(&ch, &p, &f);
        let table = MeanTable::new(&ch, &p, &f, None);
        let sums = mcsim::labelled_sums(&table, &f, &w, &SequenceMode::Random, trials, 11, mcsim::TRAINING_DOMAIN);
        let hi = sums.max_sum();
        let best = (0..=20_000).map(|i| sums.errors_at(hi * i as f64 / 20_000.0)).min().unwrap();
        let n = sums.len() as f64;
        let sigma = ((best as f64 / n) * (1.0 - best as f64 / n) / n).sqrt().max(1.0 / n);
        assert!((found.errors as f64 - best as f64) / n <= 2.0 * sigma);
        assert_eq!(optimize_threshold(&ch, &p, &f, trials, 11).unwrap(), found);
    }

    #[test]
    fn no_signal_cannot_beat_the_prior() {
        let ch = ChannelParams { n_em: 0.0, ..ChannelParams::default() };
        let f = FrameConfig::reference();
        let trials = 1000;
        match optimize_threshold(&ch, &VelocityProfile::constant(0.01), &f, trials, 5) {
            Err(McError::Detection(DetectionError::NonConvergence(_))) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(r) => {
                let n = r.bits as f64;
                let sigma = (0.25 / n).sqrt();
                assert!(r.ber >= 0.5 - 3.0 * sigma, "ber {}", r.ber);
            }
        }
    }

    proptest! {
        #[test]
        fn scale_equivariance(obs in proptest::collection::vec(0u64..50, 5),
                              w in proptest::collection::vec(0.0f64..20.0, 5),
                              gamma in 0.0f64..500.0, c in 0.01f64..100.0) {
            let d = DetectorConfig { weights: w.clone(), gamma };
            let scaled = DetectorConfig { weights: w.iter().map(|x| x * c).collect(), gamma: gamma * c };
            let s = weighted_sum(&obs, &w);
            // skip knife-edge cases where rounding of the scaled sum can flip
            prop_assume!((s - gamma).abs() > 1e-9 * s.abs().max(gamma));
            prop_assert_eq!(decide(&obs, &d).unwrap(), decide(&obs, &scaled).unwrap());
        }

        #[test]
        fn non_increasing_in_gamma(obs in proptest::collection::vec(0u64..50, 5),
                                   w in proptest::collection::vec(0.0f64..20.0, 5),
                                   g1 in 0.0f64..500.0, g2 in 0.0f64..500.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let at = |g| decide(&obs, &DetectorConfig { weights: w.clone(), gamma: g }).unwrap();
            prop_assert!(at(lo) >= at(hi));
        }

        #[test]
        fn boundary_is_inclusive(obs in proptest::collection::vec(0u64..50, 5),
                                 w in proptest::collection::vec(0.0f64..20.0, 5)) {
            let gamma = weighted_sum(&obs, &w);
            prop_assert_eq!(decide(&obs, &DetectorConfig { weights: w, gamma }).unwrap(), 1);
        }

        #[test]
        fn doubled_detector_searches_to_doubled_threshold(
            zeros in proptest::collection::vec(0.0f64..100.0, 1..40),
            ones in proptest::collection::vec(20.0f64..200.0, 1..40)) {
            let base = LabelledSums::new(zeros.clone(), ones.clone());
            let doubled = LabelledSums::new(zeros.iter().map(|x| 2.0 * x).collect(), ones.iter().map(|x| 2.0 * x).collect());
            match (search_threshold(&base), search_threshold(&doubled)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.errors, b.errors);
                    prop_assert_eq!(base.errors_at(a.gamma), doubled.errors_at(2.0 * a.gamma));
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }
    }
}
