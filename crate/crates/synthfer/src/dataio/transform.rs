//! Length normalization and train-time augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::LabeledSequence;
use crate::error::{Error, Result};
use crate::signalgen::NUM_CHANNELS;

/// How a window is chosen when a sequence is longer than the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    /// Random contiguous window, redrawn on every call.
    TrainRandomWindow,
    /// Deterministic middle window.
    TestCenterWindow,
}

/// Target length and windowing mode for [`normalize_length`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthPolicy {
    /// Target frame count (25 or 64 in the standard setups).
    pub target_len: usize,
    pub mode: WindowMode,
}

impl LengthPolicy {
    pub fn train(target_len: usize) -> LengthPolicy {
        LengthPolicy { target_len, mode: WindowMode::TrainRandomWindow }
    }

    pub fn test(target_len: usize) -> LengthPolicy {
        LengthPolicy { target_len, mode: WindowMode::TestCenterWindow }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_len == 0 {
            return Err(Error::Validation("length policy target must be >= 1".into()));
        }
        Ok(())
    }
}

/// Normalizes a sequence to exactly `policy.target_len` frames.
///
/// Shorter inputs are looped cyclically from frame 0. Longer inputs yield
/// a contiguous window: a random offset in `[0, T-L]` under
/// [`WindowMode::TrainRandomWindow`], the middle window (offset
/// `(T-L)/2`, floored) under [`WindowMode::TestCenterWindow`]. An input
/// already at the target length passes through unchanged in both modes.
pub fn normalize_length<R: Rng>(
    seq: &LabeledSequence,
    policy: LengthPolicy,
    rng: &mut R,
) -> LabeledSequence {
    let t_len = seq.len();
    let target = policy.target_len;
    let values: Vec<[f32; NUM_CHANNELS]> = if t_len < target {
        (0..target).map(|t| seq.values[t % t_len]).collect()
    } else if t_len == target {
        seq.values.clone()
    } else {
        let start = match policy.mode {
            WindowMode::TrainRandomWindow => rng.random_range(0..=t_len - target),
            WindowMode::TestCenterWindow => (t_len - target) / 2,
        };
        seq.values[start..start + target].to_vec()
    };
    LabeledSequence { values, ..seq.clone() }
}

/// Train-time augmentation parameters. All transforms are drawn once per
/// call and applied consistently across the whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Uniform amplitude-scale range; `None` disables scaling entirely.
    pub amplitude_scale_range: Option<(f32, f32)>,
    /// Std of additive per-frame Gaussian noise.
    pub noise_sigma: f32,
    /// Maximum circular time shift, in frames.
    pub max_time_shift: usize,
    /// Probability of zeroing out an entire channel.
    pub channel_dropout_prob: f32,
}

impl AugmentConfig {
    /// A config under which [`augment`] is the identity map.
    pub fn identity() -> AugmentConfig {
        AugmentConfig {
            amplitude_scale_range: None,
            noise_sigma: 0.0,
            max_time_shift: 0,
            channel_dropout_prob: 0.0,
        }
    }

    /// Mild defaults used during training.
    pub fn standard() -> AugmentConfig {
        AugmentConfig {
            amplitude_scale_range: Some((0.9, 1.1)),
            noise_sigma: 0.01,
            max_time_shift: 2,
            channel_dropout_prob: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.amplitude_scale_range {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
                return Err(Error::Validation(format!(
                    "amplitude scale range [{lo}, {hi}] must satisfy 0 <= lo <= hi"
                )));
            }
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Validation(format!(
                "noise_sigma {} must be a finite non-negative number",
                self.noise_sigma
            )));
        }
        if !self.channel_dropout_prob.is_finite()
            || !(0.0..=1.0).contains(&self.channel_dropout_prob)
        {
            return Err(Error::Validation(format!(
                "channel_dropout_prob {} outside [0, 1]",
                self.channel_dropout_prob
            )));
        }
        Ok(())
    }
}

/// Applies one random draw of (scale, noise, shift, dropout mask) to a
/// sequence: values are scaled, perturbed per frame, circularly shifted in
/// time, dropout channels zeroed, and the result clamped to `[0, 1]`.
/// Label and metadata pass through unchanged; disabled transforms draw
/// nothing from the rng.
pub fn augment<R: Rng>(seq: &LabeledSequence, cfg: &AugmentConfig, rng: &mut R) -> LabeledSequence {
    let t_len = seq.len();
    let mut values = seq.values.clone();
    let mut touched = false;

    if let Some((lo, hi)) = cfg.amplitude_scale_range {
        let scale = rng.random_range(lo..=hi);
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        touched = true;
    }

    if cfg.noise_sigma > 0.0 {
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                let z: f32 = rng.sample(rand_distr::StandardNormal);
                *v += cfg.noise_sigma * z;
            }
        }
        touched = true;
    }

    if cfg.max_time_shift > 0 && t_len > 1 {
        let m = cfg.max_time_shift as i64;
        let shift = rng.random_range(-m..=m);
        match shift.cmp(&0) {
            std::cmp::Ordering::Greater => values.rotate_right(shift as usize % t_len),
            std::cmp::Ordering::Less => values.rotate_left((-shift) as usize % t_len),
            std::cmp::Ordering::Equal => {}
        }
    }

    if cfg.channel_dropout_prob > 0.0 {
        for c in 0..NUM_CHANNELS {
            if rng.random::<f32>() < cfg.channel_dropout_prob {
                for row in values.iter_mut() {
                    row[c] = 0.0;
                }
                touched = true;
            }
        }
    }

    if touched {
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }

    LabeledSequence { values, ..seq.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::testutil::test_sequence;
    use crate::signalgen::EmotionLabel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn short_input_loops_cyclically() {
        let seq = test_sequence("s", EmotionLabel::Anger, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = normalize_length(&seq, LengthPolicy::train(25), &mut rng);
        assert_eq!(out.len(), 25);
        for t in 0..25 {
            assert_eq!(out.values[t], seq.values[t % 10]);
        }
        assert_eq!(out.native_len, 10);
    }

    #[test]
    fn center_window_uses_floored_middle_offset() {
        let seq = test_sequence("s", EmotionLabel::Anger, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = normalize_length(&seq, LengthPolicy::test(25), &mut rng);
        assert_eq!(out.values[..], seq.values[7..32]);
    }

    #[test]
    fn random_window_is_contiguous_and_in_range() {
        let seq = test_sequence("s", EmotionLabel::Anger, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let out = normalize_length(&seq, LengthPolicy::train(25), &mut rng);
            assert_eq!(out.len(), 25);
            let start = seq
                .values
                .windows(25)
                .position(|w| w == &out.values[..])
                .expect("output must be a contiguous window of the input");
            assert!(start <= 15);
        }
    }

    #[test]
    fn exact_length_is_identity_in_both_modes() {
        let seq = test_sequence("s", EmotionLabel::Anger, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for policy in [LengthPolicy::train(25), LengthPolicy::test(25)] {
            let out = normalize_length(&seq, policy, &mut rng);
            assert_eq!(out.values, seq.values);
        }
    }

    #[test]
    fn identity_config_is_identity() {
        let seq = test_sequence("s", EmotionLabel::Disgust, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment(&seq, &AugmentConfig::identity(), &mut rng);
        assert_eq!(out.values, seq.values);
    }

    #[test]
    fn degenerate_scale_range_scales_uniformly() {
        let seq = test_sequence("s", EmotionLabel::Disgust, 25);
        let cfg = AugmentConfig {
            amplitude_scale_range: Some((0.9, 0.9)),
            ..AugmentConfig::identity()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment(&seq, &cfg, &mut rng);
        for (orow, irow) in out.values.iter().zip(&seq.values) {
            for (o, i) in orow.iter().zip(irow) {
                assert!((o - i * 0.9).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn augment_is_deterministic_per_seed() {
        let seq = test_sequence("s", EmotionLabel::Confusion, 25);
        let cfg = AugmentConfig::standard();
        let a = augment(&seq, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let b = augment(&seq, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn augment_keeps_values_in_unit_interval() {
        let seq = test_sequence("s", EmotionLabel::Confusion, 25);
        let cfg = AugmentConfig {
            amplitude_scale_range: Some((0.5, 2.0)),
            noise_sigma: 0.5,
            max_time_shift: 5,
            channel_dropout_prob: 0.3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let out = augment(&seq, &cfg, &mut rng);
            for row in &out.values {
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = AugmentConfig::standard();
        cfg.amplitude_scale_range = Some((1.2, 0.8));
        assert!(cfg.validate().is_err());
        cfg = AugmentConfig::standard();
        cfg.channel_dropout_prob = 1.5;
        assert!(cfg.validate().is_err());
        assert!(LengthPolicy::train(0).validate().is_err());
    }
}
