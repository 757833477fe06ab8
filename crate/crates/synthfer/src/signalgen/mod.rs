//! Synthetic social-signal generation.
//!
//! A social signal is a short facial-expression animation described as
//! keyframed intensities over a fixed set of FACS action-unit channels.
//! This module owns the channel inventory, the canonical 21-signal catalog
//! (7 per emotion), the virtual identity suite, the viewing-angle grid, and
//! the renderers that turn (identity, signal, angle, noise) into labeled
//! sequences.

mod identity;
mod render;

pub use identity::{
    generate_identity_suite, Ethnicity, Gender, VirtualIdentity, BASELINE_RANGE, GAIN_RANGE,
    SUITE_SIZE, TEMPO_RANGE,
};
pub use render::{
    angle_grid, generate_surrogate_real, generate_synthetic_dataset, render, NoiseConfig,
    ViewingAngle, SURROGATE_IDENTITIES, SURROGATE_LEN_RANGE, SURROGATE_NON_CAUCASIAN,
    SURROGATE_TOTAL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of action-unit channels; every trajectory and sequence uses
/// exactly this many columns, in [`AuChannel::ALL`] order.
pub const NUM_CHANNELS: usize = 14;

/// Every social-signal animation spans exactly this many frames.
pub const SIGNAL_FRAMES: usize = 25;

/// Number of emotion classes.
pub const NUM_CLASSES: usize = 3;

/// The fixed action-unit channel set.
///
/// The enum order defines the column order of every trajectory and
/// rendered sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuChannel {
    #[serde(rename = "AU1")]
    Au1,
    #[serde(rename = "AU4")]
    Au4,
    #[serde(rename = "AU5")]
    Au5,
    #[serde(rename = "AU7")]
    Au7,
    #[serde(rename = "AU9")]
    Au9,
    #[serde(rename = "AU10")]
    Au10,
    #[serde(rename = "AU15")]
    Au15,
    #[serde(rename = "AU16")]
    Au16,
    #[serde(rename = "AU17")]
    Au17,
    #[serde(rename = "AU23")]
    Au23,
    #[serde(rename = "AU25")]
    Au25,
    #[serde(rename = "AU26")]
    Au26,
    #[serde(rename = "AU61")]
    Au61,
    #[serde(rename = "AU62")]
    Au62,
}

impl AuChannel {
    /// All channels in column order.
    pub const ALL: [AuChannel; NUM_CHANNELS] = [
        AuChannel::Au1,
        AuChannel::Au4,
        AuChannel::Au5,
        AuChannel::Au7,
        AuChannel::Au9,
        AuChannel::Au10,
        AuChannel::Au15,
        AuChannel::Au16,
        AuChannel::Au17,
        AuChannel::Au23,
        AuChannel::Au25,
        AuChannel::Au26,
        AuChannel::Au61,
        AuChannel::Au62,
    ];

    /// Column index of this channel.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    /// FACS code, e.g. `"AU4"`.
    pub fn code(self) -> &'static str {
        match self {
            AuChannel::Au1 => "AU1",
            AuChannel::Au4 => "AU4",
            AuChannel::Au5 => "AU5",
            AuChannel::Au7 => "AU7",
            AuChannel::Au9 => "AU9",
            AuChannel::Au10 => "AU10",
            AuChannel::Au15 => "AU15",
            AuChannel::Au16 => "AU16",
            AuChannel::Au17 => "AU17",
            AuChannel::Au23 => "AU23",
            AuChannel::Au25 => "AU25",
            AuChannel::Au26 => "AU26",
            AuChannel::Au61 => "AU61",
            AuChannel::Au62 => "AU62",
        }
    }

    /// Human-readable muscle-movement name.
    pub fn name(self) -> &'static str {
        match self {
            AuChannel::Au1 => "inner brow raiser",
            AuChannel::Au4 => "brow lowerer",
            AuChannel::Au5 => "upper lid raiser",
            AuChannel::Au7 => "lid tightener",
            AuChannel::Au9 => "nose wrinkler",
            AuChannel::Au10 => "upper lip raiser",
            AuChannel::Au15 => "lip corner depressor",
            AuChannel::Au16 => "lower lip depressor",
            AuChannel::Au17 => "chin raiser",
            AuChannel::Au23 => "lip tightener",
            AuChannel::Au25 => "lips part",
            AuChannel::Au26 => "jaw drop",
            AuChannel::Au61 => "eyes left",
            AuChannel::Au62 => "eyes right",
        }
    }
}

impl std::fmt::Display for AuChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// The closed three-class emotion set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Confusion,
    Anger,
    Disgust,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_CLASSES] = [
        EmotionLabel::Confusion,
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
    ];

    /// Class index used for confusion matrices and network outputs.
    pub fn index(self) -> usize {
        match self {
            EmotionLabel::Confusion => 0,
            EmotionLabel::Anger => 1,
            EmotionLabel::Disgust => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<EmotionLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Confusion => "confusion",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Disgust => "disgust",
        }
    }
}

impl std::fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One keyframe of a social-signal animation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    /// Frame index within `0..SIGNAL_FRAMES`.
    pub frame: usize,
    pub au: AuChannel,
    /// Target intensity in `[0, 1]`.
    pub intensity: f32,
}

/// A keyframed social-signal animation spanning [`SIGNAL_FRAMES`] frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialSignalSpec {
    pub id: String,
    pub label: EmotionLabel,
    pub keyframes: Vec<Keyframe>,
}

impl SocialSignalSpec {
    /// Checks frame bounds, intensity range, duplicate keyframes, and the
    /// at-least-one-active-keyframe rule.
    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(Error::Validation(format!("signal {}: no keyframes", self.id)));
        }
        let mut seen = std::collections::HashSet::new();
        for kf in &self.keyframes {
            if kf.frame >= SIGNAL_FRAMES {
                return Err(Error::Validation(format!(
                    "signal {}: keyframe frame {} outside 0..{}",
                    self.id,
                    kf.frame,
                    SIGNAL_FRAMES - 1
                )));
            }
            if !kf.intensity.is_finite() || !(0.0..=1.0).contains(&kf.intensity) {
                return Err(Error::Validation(format!(
                    "signal {}: intensity {} outside [0, 1]",
                    self.id, kf.intensity
                )));
            }
            if !seen.insert((kf.frame, kf.au)) {
                return Err(Error::Validation(format!(
                    "signal {}: duplicate keyframe for {} at frame {}",
                    self.id, kf.au, kf.frame
                )));
            }
        }
        if !self.keyframes.iter().any(|kf| kf.intensity > 0.0) {
            return Err(Error::Validation(format!(
                "signal {}: every keyframe has zero intensity",
                self.id
            )));
        }
        Ok(())
    }
}

/// An interpolated intensity-over-time matrix, `[SIGNAL_FRAMES x NUM_CHANNELS]`
/// with every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuTrajectory {
    values: Vec<[f32; NUM_CHANNELS]>,
}

impl AuTrajectory {
    pub fn frames(&self) -> &[[f32; NUM_CHANNELS]] {
        &self.values
    }

    /// Intensity of `channel` at `frame`.
    pub fn at(&self, frame: usize, channel: AuChannel) -> f32 {
        self.values[frame][channel.index()]
    }
}

/// Piecewise-linear interpolation of a signal spec into a full trajectory.
///
/// Per channel: zero before the first keyframe, linear between consecutive
/// keyframes, and hold-last after the final keyframe.
pub fn interpolate_trajectory(spec: &SocialSignalSpec) -> Result<AuTrajectory> {
    spec.validate()?;

    // Keyframes per channel, sorted by frame.
    let mut per_channel: Vec<Vec<(usize, f32)>> = vec![Vec::new(); NUM_CHANNELS];
    for kf in &spec.keyframes {
        per_channel[kf.au.index()].push((kf.frame, kf.intensity));
    }
    for kfs in &mut per_channel {
        kfs.sort_by_key(|&(frame, _)| frame);
    }

    let mut values = vec![[0.0f32; NUM_CHANNELS]; SIGNAL_FRAMES];
    for (ch, kfs) in per_channel.iter().enumerate() {
        if kfs.is_empty() {
            continue;
        }
        for (t, row) in values.iter_mut().enumerate() {
            let (first_frame, first_v) = kfs[0];
            let (last_frame, last_v) = *kfs.last().unwrap();
            row[ch] = if t < first_frame {
                0.0
            } else if t == first_frame {
                first_v
            } else if t >= last_frame {
                last_v
            } else {
                // Between two keyframes: find the surrounding pair.
                let next = kfs.iter().position(|&(f, _)| f > t).unwrap();
                let (f0, v0) = kfs[next - 1];
                let (f1, v1) = kfs[next];
                let alpha = (t - f0) as f32 / (f1 - f0) as f32;
                v0 + alpha * (v1 - v0)
            };
        }
    }
    Ok(AuTrajectory { values })
}

/// Parses social-signal specs from a JSON document (a top-level array of
/// `{id, label, keyframes: [{frame, au, intensity}]}` objects) and validates
/// each one.
pub fn signals_from_json(json: &str) -> Result<Vec<SocialSignalSpec>> {
    let specs: Vec<SocialSignalSpec> = serde_json::from_str(json)?;
    for spec in &specs {
        spec.validate()?;
    }
    Ok(specs)
}

const CANONICAL_SIGNALS_JSON: &str = include_str!("../../assets/signals_v1.json");

/// The canonical 21-signal catalog: 7 animations per emotion, shipped as a
/// versioned JSON asset.
pub fn canonical_signals() -> Vec<SocialSignalSpec> {
    signals_from_json(CANONICAL_SIGNALS_JSON).expect("embedded signal catalog is valid")
}
