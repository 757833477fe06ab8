//! Virtual identities: per-face morphology parameters that modulate how a
//! social signal plays out on a particular simulated person.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::NUM_CHANNELS;

/// Identities in the synthetic suite.
pub const SUITE_SIZE: usize = 24;

/// Per-channel expressiveness multiplier range.
pub const GAIN_RANGE: (f32, f32) = (0.6, 1.4);

/// Per-channel resting-intensity offset range.
pub const BASELINE_RANGE: (f32, f32) = (0.0, 0.1);

/// Timing-warp factor range (below 1 plays slower, above 1 faster).
pub const TEMPO_RANGE: (f32, f32) = (0.85, 1.15);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ethnicity {
    Caucasian,
    Black,
    Asian,
    Hispanic,
}

impl Ethnicity {
    pub const ALL: [Ethnicity; 4] = [
        Ethnicity::Caucasian,
        Ethnicity::Black,
        Ethnicity::Asian,
        Ethnicity::Hispanic,
    ];
}

impl std::fmt::Display for Ethnicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ethnicity::Caucasian => "caucasian",
            Ethnicity::Black => "black",
            Ethnicity::Asian => "asian",
            Ethnicity::Hispanic => "hispanic",
        })
    }
}

/// A parameterized virtual face.
///
/// `gain` scales each channel's animated intensity, `baseline` adds a small
/// resting offset, and `tempo` warps animation timing. Together they make
/// the same signal spec render differently across identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualIdentity {
    pub id: String,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub gain: [f32; NUM_CHANNELS],
    pub baseline: [f32; NUM_CHANNELS],
    pub tempo: f32,
}

impl VirtualIdentity {
    /// An identity that reproduces trajectories untouched: unit gain, zero
    /// baseline, unit tempo.
    pub fn neutral(id: &str, gender: Gender, ethnicity: Ethnicity) -> VirtualIdentity {
        VirtualIdentity {
            id: id.to_string(),
            gender,
            ethnicity,
            gain: [1.0; NUM_CHANNELS],
            baseline: [0.0; NUM_CHANNELS],
            tempo: 1.0,
        }
    }

    /// Checks every parameter against its documented range.
    pub fn validate(&self) -> Result<()> {
        for (i, &g) in self.gain.iter().enumerate() {
            if !(GAIN_RANGE.0..=GAIN_RANGE.1).contains(&g) {
                return Err(Error::Validation(format!(
                    "identity {}: gain[{i}] = {g} outside [{}, {}]",
                    self.id, GAIN_RANGE.0, GAIN_RANGE.1
                )));
            }
        }
        for (i, &b) in self.baseline.iter().enumerate() {
            if !(BASELINE_RANGE.0..=BASELINE_RANGE.1).contains(&b) {
                return Err(Error::Validation(format!(
                    "identity {}: baseline[{i}] = {b} outside [{}, {}]",
                    self.id, BASELINE_RANGE.0, BASELINE_RANGE.1
                )));
            }
        }
        if !(TEMPO_RANGE.0..=TEMPO_RANGE.1).contains(&self.tempo) {
            return Err(Error::Validation(format!(
                "identity {}: tempo = {} outside [{}, {}]",
                self.id, self.tempo, TEMPO_RANGE.0, TEMPO_RANGE.1
            )));
        }
        Ok(())
    }
}

/// Draws one identity's morphology parameters.
pub(crate) fn sample_identity(
    rng: &mut ChaCha8Rng,
    id: String,
    gender: Gender,
    ethnicity: Ethnicity,
) -> VirtualIdentity {
    let mut gain = [0.0f32; NUM_CHANNELS];
    let mut baseline = [0.0f32; NUM_CHANNELS];
    for g in &mut gain {
        *g = rng.random_range(GAIN_RANGE.0..=GAIN_RANGE.1);
    }
    for b in &mut baseline {
        *b = rng.random_range(BASELINE_RANGE.0..=BASELINE_RANGE.1);
    }
    let tempo = rng.random_range(TEMPO_RANGE.0..=TEMPO_RANGE.1);
    VirtualIdentity { id, gender, ethnicity, gain, baseline, tempo }
}

/// Generates the fixed 24-identity synthetic suite: 6 per ethnicity, each
/// ethnicity split 3 female / 3 male, so 12 per gender overall. The same
/// seed always yields the same suite.
pub fn generate_identity_suite(seed: u64) -> Vec<VirtualIdentity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(SUITE_SIZE);
    for (ei, &ethnicity) in Ethnicity::ALL.iter().enumerate() {
        for j in 0..SUITE_SIZE / Ethnicity::ALL.len() {
            let gender = Gender::ALL[j % 2];
            let id = format!("syn-{:02}", ei * (SUITE_SIZE / Ethnicity::ALL.len()) + j);
            suite.push(sample_identity(&mut rng, id, gender, ethnicity));
        }
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_composition() {
        let suite = generate_identity_suite(7);
        assert_eq!(suite.len(), SUITE_SIZE);
        for ethnicity in Ethnicity::ALL {
            let of_eth: Vec<_> = suite.iter().filter(|i| i.ethnicity == ethnicity).collect();
            assert_eq!(of_eth.len(), 6);
            assert_eq!(of_eth.iter().filter(|i| i.gender == Gender::Female).count(), 3);
            assert_eq!(of_eth.iter().filter(|i| i.gender == Gender::Male).count(), 3);
        }
        for g in Gender::ALL {
            assert_eq!(suite.iter().filter(|i| i.gender == g).count(), 12);
        }
    }

    #[test]
    fn suite_ids_unique_and_params_in_range() {
        let suite = generate_identity_suite(7);
        let ids: std::collections::HashSet<_> = suite.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids.len(), SUITE_SIZE);
        for identity in &suite {
            identity.validate().unwrap();
        }
    }

    #[test]
    fn suite_is_deterministic_per_seed() {
        assert_eq!(generate_identity_suite(42), generate_identity_suite(42));
        assert_ne!(generate_identity_suite(42), generate_identity_suite(43));
    }

    #[test]
    fn out_of_range_params_rejected() {
        let mut id = VirtualIdentity::neutral("x", Gender::Female, Ethnicity::Asian);
        id.validate().unwrap();
        id.gain[3] = 1.5;
        assert!(id.validate().is_err());
        id.gain[3] = 1.0;
        id.tempo = 0.5;
        assert!(id.validate().is_err());
    }
}
