//! Rendering: viewing angles, noise, and the generators that combine
//! identities, signals, and angles into labeled sequence datasets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetMeta, LabeledSequence, Provenance, SequenceDataset};
use crate::error::{Error, Result};
use crate::signalgen::identity::sample_identity;
use crate::signalgen::{
    interpolate_trajectory, AuChannel, AuTrajectory, EmotionLabel, Ethnicity, Gender,
    SocialSignalSpec, VirtualIdentity, NUM_CHANNELS, SIGNAL_FRAMES,
};

/// Identities behind the surrogate-real dataset.
pub const SURROGATE_IDENTITIES: usize = 20;

/// Sequences in the surrogate-real dataset (41 per class).
pub const SURROGATE_TOTAL: usize = 123;

/// Surrogate-real sequences rendered from non-Caucasian identities.
pub const SURROGATE_NON_CAUCASIAN: usize = 26;

/// Surrogate-real sequence length range, inclusive.
pub const SURROGATE_LEN_RANGE: (usize, usize) = (20, 75);

/// A camera orientation, in degrees of horizontal and vertical rotation
/// away from frontal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewingAngle {
    pub h_rot: i32,
    pub v_rot: i32,
}

impl ViewingAngle {
    pub fn frontal() -> ViewingAngle {
        ViewingAngle { h_rot: 0, v_rot: 0 }
    }

    pub fn new(h_rot: i32, v_rot: i32) -> ViewingAngle {
        ViewingAngle { h_rot, v_rot }
    }
}

impl std::fmt::Display for ViewingAngle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "h{}v{}", self.h_rot, self.v_rot)
    }
}

/// The standard 9-angle grid: frontal plus four oblique pairs mirrored
/// about the frontal view.
pub fn angle_grid() -> Vec<ViewingAngle> {
    [
        (0, 0),
        (-20, -15),
        (-40, -30),
        (20, 15),
        (40, 30),
        (20, -15),
        (40, -30),
        (-20, 15),
        (-40, 30),
    ]
    .iter()
    .map(|&(h, v)| ViewingAngle::new(h, v))
    .collect()
}

/// Observation-noise parameters applied at render time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Std of per-frame, per-channel additive Gaussian noise.
    pub additive_sigma: f32,
    /// Maximum circular temporal shift, in frames.
    pub jitter_frames: usize,
    /// Amplitude of a low-frequency sinusoidal drift added per channel.
    pub drift_amplitude: f32,
    /// Probability that a channel gets a zeroed-out span (occlusion).
    pub occlusion_prob: f32,
}

impl NoiseConfig {
    /// No noise at all: renders are exact and draw nothing from the rng.
    pub fn none() -> NoiseConfig {
        NoiseConfig {
            additive_sigma: 0.0,
            jitter_frames: 0,
            drift_amplitude: 0.0,
            occlusion_prob: 0.0,
        }
    }

    /// Mild defaults for the synthetic domain.
    pub fn synthetic_default() -> NoiseConfig {
        NoiseConfig {
            additive_sigma: 0.02,
            jitter_frames: 1,
            drift_amplitude: 0.02,
            occlusion_prob: 0.05,
        }
    }

    /// Harsher defaults for the surrogate-real domain: stronger sensor
    /// noise, head-movement drift, and occlusion dropouts. Calibrated so
    /// that the 123-sequence dataset is genuinely hard to learn from
    /// alone while remaining related enough to the synthetic domain for
    /// transfer to help.
    pub fn surrogate_default() -> NoiseConfig {
        NoiseConfig {
            additive_sigma: 0.12,
            jitter_frames: 4,
            drift_amplitude: 0.15,
            occlusion_prob: 0.45,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.additive_sigma.is_finite() || self.additive_sigma < 0.0 {
            return Err(Error::Validation(format!(
                "additive_sigma {} must be a finite non-negative number",
                self.additive_sigma
            )));
        }
        if !self.drift_amplitude.is_finite() || self.drift_amplitude < 0.0 {
            return Err(Error::Validation(format!(
                "drift_amplitude {} must be a finite non-negative number",
                self.drift_amplitude
            )));
        }
        if !self.occlusion_prob.is_finite() || !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Validation(format!(
                "occlusion_prob {} outside [0, 1]",
                self.occlusion_prob
            )));
        }
        Ok(())
    }
}

/// Per-channel visibility factor for a viewing angle.
///
/// Every channel is scaled by `cos(h_rot)·cos(v_rot)`; the lateral
/// eye-direction channels lose additional visibility when the camera is
/// rotated toward the side they point at: AU61 (eyes left) is further
/// scaled by `1 − h_rot/90` and AU62 by `1 + h_rot/90`, both clamped to
/// `[0, 1]` so attenuation never amplifies.
pub(crate) fn attenuation(angle: ViewingAngle, channel: AuChannel) -> f32 {
    let base = (angle.h_rot as f32).to_radians().cos() * (angle.v_rot as f32).to_radians().cos();
    let asym = match channel {
        AuChannel::Au61 => 1.0 - angle.h_rot as f32 / 90.0,
        AuChannel::Au62 => 1.0 + angle.h_rot as f32 / 90.0,
        _ => 1.0,
    };
    base * asym.clamp(0.0, 1.0)
}

/// Samples the trajectory at a fractional frame position in `[0, 24]`.
fn sample_at(traj: &AuTrajectory, p: f32, ch: usize) -> f32 {
    let i = p.floor() as usize;
    let frac = p - i as f32;
    let frames = traj.frames();
    if frac == 0.0 || i + 1 >= frames.len() {
        frames[i.min(frames.len() - 1)][ch]
    } else {
        frames[i][ch] + frac * (frames[i + 1][ch] - frames[i][ch])
    }
}

/// Core renderer shared by the synthetic and surrogate paths.
///
/// `positions` gives, per output frame, the (pre-tempo) sample position in
/// the 25-frame trajectory; the identity's tempo warp and all noise stages
/// are applied here. Noise stages draw from the rng only when their
/// parameter is nonzero, so a zero-noise render consumes no randomness.
fn render_frames<R: Rng>(
    identity: &VirtualIdentity,
    traj: &AuTrajectory,
    angle: ViewingAngle,
    noise: &NoiseConfig,
    rng: &mut R,
    positions: &[f32],
) -> Vec<[f32; NUM_CHANNELS]> {
    let t_len = positions.len();
    let max_pos = (SIGNAL_FRAMES - 1) as f32;

    let att: [f32; NUM_CHANNELS] =
        std::array::from_fn(|c| attenuation(angle, AuChannel::ALL[c]));

    let mut values: Vec<[f32; NUM_CHANNELS]> = positions
        .iter()
        .map(|&pos| {
            let p = (pos * identity.tempo).clamp(0.0, max_pos);
            std::array::from_fn(|c| {
                let v = identity.gain[c] * sample_at(traj, p, c) + identity.baseline[c];
                att[c] * v
            })
        })
        .collect();

    if noise.jitter_frames > 0 {
        let j = noise.jitter_frames as i64;
        let shift = rng.random_range(-j..=j);
        match shift.cmp(&0) {
            std::cmp::Ordering::Greater => values.rotate_right(shift as usize % t_len),
            std::cmp::Ordering::Less => values.rotate_left((-shift) as usize % t_len),
            std::cmp::Ordering::Equal => {}
        }
    }

    if noise.drift_amplitude > 0.0 {
        let freq: f32 = rng.random_range(0.25..=1.0);
        let phases: [f32; NUM_CHANNELS] =
            std::array::from_fn(|_| rng.random_range(0.0..std::f32::consts::TAU));
        for (t, row) in values.iter_mut().enumerate() {
            let base = std::f32::consts::TAU * freq * t as f32 / t_len as f32;
            for (c, v) in row.iter_mut().enumerate() {
                *v += noise.drift_amplitude * (base + phases[c]).sin();
            }
        }
    }

    if noise.additive_sigma > 0.0 {
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                let z: f32 = rng.sample(StandardNormal);
                *v += noise.additive_sigma * z;
            }
        }
    }

    if noise.occlusion_prob > 0.0 {
        let min_span = (t_len / 5).max(1);
        let max_span = (t_len / 2).max(min_span);
        for c in 0..NUM_CHANNELS {
            if rng.random::<f32>() < noise.occlusion_prob {
                let start = rng.random_range(0..t_len);
                let span = rng.random_range(min_span..=max_span);
                for row in values.iter_mut().skip(start).take(span) {
                    row[c] = 0.0;
                }
            }
        }
    }

    for row in values.iter_mut() {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    values
}

/// Renders one signal on one identity from one viewing angle, producing a
/// 25-frame synthetic sequence.
pub fn render<R: Rng>(
    identity: &VirtualIdentity,
    spec: &SocialSignalSpec,
    angle: ViewingAngle,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<LabeledSequence> {
    identity.validate()?;
    noise.validate()?;
    let traj = interpolate_trajectory(spec)?;
    let positions: Vec<f32> = (0..SIGNAL_FRAMES).map(|t| t as f32).collect();
    let values = render_frames(identity, &traj, angle, noise, rng, &positions);
    Ok(LabeledSequence {
        id: format!("{}_{}_{}", identity.id, spec.id, angle),
        native_len: values.len(),
        values,
        label: spec.label,
        signal_id: spec.id.clone(),
        identity_id: identity.id.clone(),
        gender: identity.gender,
        ethnicity: identity.ethnicity,
        angle,
        provenance: Provenance::Synthetic,
    })
}

/// Renders the full cross product `suite × signals × angles` into one
/// dataset. With the standard suite (24), catalog (21), and grid (9) this
/// yields 4536 sequences, 1512 per label.
pub fn generate_synthetic_dataset(
    suite: &[VirtualIdentity],
    signals: &[SocialSignalSpec],
    angles: &[ViewingAngle],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<SequenceDataset> {
    if suite.is_empty() || signals.is_empty() || angles.is_empty() {
        return Err(Error::Validation(
            "synthetic generation requires non-empty suite, signals, and angles".into(),
        ));
    }
    noise.validate()?;
    let trajectories: Vec<AuTrajectory> =
        signals.iter().map(interpolate_trajectory).collect::<Result<_>>()?;
    let positions: Vec<f32> = (0..SIGNAL_FRAMES).map(|t| t as f32).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(suite.len() * signals.len() * angles.len());
    for identity in suite {
        identity.validate()?;
        for (spec, traj) in signals.iter().zip(&trajectories) {
            for &angle in angles {
                let values = render_frames(identity, traj, angle, noise, &mut rng, &positions);
                sequences.push(LabeledSequence {
                    id: format!("{}_{}_{}", identity.id, spec.id, angle),
                    native_len: values.len(),
                    values,
                    label: spec.label,
                    signal_id: spec.id.clone(),
                    identity_id: identity.id.clone(),
                    gender: identity.gender,
                    ethnicity: identity.ethnicity,
                    angle,
                    provenance: Provenance::Synthetic,
                });
            }
        }
    }
    SequenceDataset::new(DatasetMeta::new("synthetic", seed), sequences)
}

/// Generates the surrogate "real" dataset: 123 variable-length sequences
/// (41 per label) from 20 fresh identities, exactly 26 of them rendered
/// from non-Caucasian identities, under noise strictly harsher than the
/// synthetic defaults.
///
/// Lengths vary in `[20, 75]`: the 25-frame animation is tempo-stretched
/// to a body of roughly 22–36 frames (truncated if the clip is shorter)
/// and the final pose is held for the remaining tail.
pub fn generate_surrogate_real(
    suite_seed: u64,
    noise_real: &NoiseConfig,
    seed: u64,
) -> Result<SequenceDataset> {
    noise_real.validate()?;
    let reference = NoiseConfig::synthetic_default();
    if noise_real.additive_sigma <= reference.additive_sigma
        || noise_real.drift_amplitude <= 0.0
        || noise_real.occlusion_prob <= 0.0
    {
        return Err(Error::Validation(format!(
            "surrogate-real noise must be harsher than synthetic defaults: \
             sigma > {}, drift > 0, occlusion > 0 (got sigma {}, drift {}, occlusion {})",
            reference.additive_sigma,
            noise_real.additive_sigma,
            noise_real.drift_amplitude,
            noise_real.occlusion_prob
        )));
    }

    // 20 fresh identities under a distinct id prefix; the first four are
    // non-Caucasian and carry the first 26 sequences.
    let mut id_rng = ChaCha8Rng::seed_from_u64(suite_seed);
    let minority = [Ethnicity::Black, Ethnicity::Asian, Ethnicity::Hispanic, Ethnicity::Black];
    let mut identities = Vec::with_capacity(SURROGATE_IDENTITIES);
    for i in 0..SURROGATE_IDENTITIES {
        let ethnicity = if i < minority.len() { minority[i] } else { Ethnicity::Caucasian };
        let gender = Gender::ALL[i % 2];
        identities.push(sample_identity(&mut id_rng, format!("real-{i:02}"), gender, ethnicity));
    }

    let signals = crate::signalgen::canonical_signals();
    let by_label: Vec<Vec<&SocialSignalSpec>> = EmotionLabel::ALL
        .iter()
        .map(|&l| signals.iter().filter(|s| s.label == l).collect())
        .collect();
    let trajectories: std::collections::HashMap<&str, AuTrajectory> = signals
        .iter()
        .map(|s| Ok((s.id.as_str(), interpolate_trajectory(s)?)))
        .collect::<Result<_>>()?;
    let grid = angle_grid();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(SURROGATE_TOTAL);
    for i in 0..SURROGATE_TOTAL {
        let label = EmotionLabel::ALL[i % 3];
        let identity = if i < SURROGATE_NON_CAUCASIAN {
            &identities[i % minority.len()]
        } else {
            &identities[minority.len() + (i - SURROGATE_NON_CAUCASIAN) % (SURROGATE_IDENTITIES - minority.len())]
        };
        let spec = by_label[label.index()][rng.random_range(0..7)];
        let angle = grid[rng.random_range(0..grid.len())];
        let t_len = rng.random_range(SURROGATE_LEN_RANGE.0..=SURROGATE_LEN_RANGE.1);

        // Stretch the 25-frame animation into a body, then hold the tail.
        let stretch: f32 = rng.random_range(0.88..=1.45);
        let body = ((SIGNAL_FRAMES as f32 * stretch).round() as usize).clamp(2, t_len);
        let positions: Vec<f32> = (0..t_len)
            .map(|t| {
                if t < body {
                    t as f32 * (SIGNAL_FRAMES - 1) as f32 / (body - 1) as f32
                } else {
                    (SIGNAL_FRAMES - 1) as f32
                }
            })
            .collect();

        let traj = &trajectories[spec.id.as_str()];
        let values = render_frames(identity, traj, angle, noise_real, &mut rng, &positions);
        sequences.push(LabeledSequence {
            id: format!("{}_seq{:03}_{}", identity.id, i, spec.id),
            native_len: values.len(),
            values,
            label,
            signal_id: spec.id.clone(),
            identity_id: identity.id.clone(),
            gender: identity.gender,
            ethnicity: identity.ethnicity,
            angle,
            provenance: Provenance::SurrogateReal,
        });
    }

    let mut meta = DatasetMeta::new("surrogate-real", seed);
    meta.description = format!("surrogate-real domain (identity suite_seed={suite_seed})");
    SequenceDataset::new(meta, sequences)
}
