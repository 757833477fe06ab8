//! Dataset containers, serialization, length normalization, train-time
//! augmentation, fold assignment, and the mixed-ratio epoch sampler.

mod folds;
mod store;
mod transform;

pub use folds::{assign_folds, mixed_ratio_epoch, split_synthetic_by_identity};
pub use store::{load_dataset, save_dataset, DATASET_SCHEMA_VERSION};
pub use transform::{augment, normalize_length, AugmentConfig, LengthPolicy, WindowMode};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::{EmotionLabel, Ethnicity, Gender, ViewingAngle, NUM_CHANNELS, NUM_CLASSES};

/// Where a sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "synthetic")]
    Synthetic,
    #[serde(rename = "surrogate-real")]
    SurrogateReal,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Synthetic => "synthetic",
            Provenance::SurrogateReal => "surrogate-real",
        })
    }
}

/// A labeled multivariate time series: `[T x 14]` action-unit intensities
/// plus the metadata needed for training, evaluation, and fairness audits.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    /// Row-major frames; every row is one time step across the 14 channels.
    pub values: Vec<[f32; NUM_CHANNELS]>,
    pub label: EmotionLabel,
    /// Id of the social-signal animation this sequence was rendered from.
    pub signal_id: String,
    pub identity_id: String,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub angle: ViewingAngle,
    pub provenance: Provenance,
    /// Frame count as originally generated, before any length
    /// normalization.
    pub native_len: usize,
}

impl LabeledSequence {
    /// Current frame count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation(format!("sequence {}: zero frames", self.id)));
        }
        for (t, row) in self.values.iter().enumerate() {
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "sequence {}: non-finite value at frame {t}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Provenance record for a dataset: how it was generated and from what
/// seed, so the content can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub description: String,
}

impl DatasetMeta {
    pub fn new(name: &str, seed: u64) -> DatasetMeta {
        DatasetMeta { name: name.to_string(), seed, description: String::new() }
    }
}

/// An immutable collection of labeled sequences with optional fold
/// assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub meta: DatasetMeta,
    pub sequences: Vec<LabeledSequence>,
    /// When present, `fold_of[i]` is the cross-validation fold of
    /// `sequences[i]`; fold indices form a partition of the dataset.
    pub fold_of: Option<Vec<usize>>,
}

impl SequenceDataset {
    /// Validates every sequence and id uniqueness.
    pub fn new(meta: DatasetMeta, sequences: Vec<LabeledSequence>) -> Result<SequenceDataset> {
        let mut ids = std::collections::HashSet::with_capacity(sequences.len());
        for seq in &sequences {
            seq.validate()?;
            if !ids.insert(seq.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sequence id {}", seq.id)));
            }
        }
        drop(ids);
        Ok(SequenceDataset { meta, sequences, fold_of: None })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Sequence counts per class, indexed by [`EmotionLabel::index`].
    pub fn label_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for seq in &self.sequences {
            counts[seq.label.index()] += 1;
        }
        counts
    }

    /// Distinct identity ids, sorted.
    pub fn identity_ids(&self) -> BTreeSet<String> {
        self.sequences.iter().map(|s| s.identity_id.clone()).collect()
    }

    /// Number of folds, if assigned.
    pub fn fold_count(&self) -> Option<usize> {
        self.fold_of.as_ref().map(|f| f.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Sequences assigned to `fold` (requires fold assignment).
    pub fn fold_members(&self, fold: usize) -> Vec<&LabeledSequence> {
        match &self.fold_of {
            Some(fold_of) => self
                .sequences
                .iter()
                .zip(fold_of)
                .filter(|&(_, &f)| f == fold)
                .map(|(s, _)| s)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Sequences outside `fold` (requires fold assignment).
    pub fn fold_complement(&self, fold: usize) -> Vec<&LabeledSequence> {
        match &self.fold_of {
            Some(fold_of) => self
                .sequences
                .iter()
                .zip(fold_of)
                .filter(|&(_, &f)| f != fold)
                .map(|(s, _)| s)
                .collect(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A minimal synthetic-looking sequence for unit tests.
    pub fn test_sequence(id: &str, label: EmotionLabel, frames: usize) -> LabeledSequence {
        let values = (0..frames)
            .map(|t| std::array::from_fn(|c| ((t * NUM_CHANNELS + c) % 17) as f32 / 16.0))
            .collect::<Vec<_>>();
        LabeledSequence {
            id: id.to_string(),
            values,
            label,
            signal_id: format!("sig-of-{id}"),
            identity_id: format!("id-of-{id}"),
            gender: Gender::Female,
            ethnicity: Ethnicity::Caucasian,
            angle: ViewingAngle::frontal(),
            provenance: Provenance::Synthetic,
            native_len: frames,
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let seqs = vec![
            test_sequence("a", EmotionLabel::Anger, 5),
            test_sequence("a", EmotionLabel::Disgust, 5),
        ];
        assert!(SequenceDataset::new(DatasetMeta::new("t", 0), seqs).is_err());
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut seq = test_sequence("a", EmotionLabel::Anger, 5);
        seq.values.clear();
        assert!(SequenceDataset::new(DatasetMeta::new("t", 0), vec![seq]).is_err());
    }

    #[test]
    fn fold_membership_helpers() {
        let seqs: Vec<_> =
            (0..6).map(|i| test_sequence(&format!("s{i}"), EmotionLabel::Anger, 5)).collect();
        let mut ds = SequenceDataset::new(DatasetMeta::new("t", 0), seqs).unwrap();
        ds.fold_of = Some(vec![0, 1, 0, 1, 2, 2]);
        assert_eq!(ds.fold_count(), Some(3));
        assert_eq!(ds.fold_members(0).len(), 2);
        assert_eq!(ds.fold_complement(0).len(), 4);
    }
}
