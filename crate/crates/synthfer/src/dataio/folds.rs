//! Cross-validation fold assignment, identity-disjoint splitting, and the
//! mixed-ratio epoch sampler.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataio::{LabeledSequence, Provenance, SequenceDataset};
use crate::error::{Error, Result};
use crate::signalgen::{EmotionLabel, Ethnicity, NUM_CLASSES};

fn near_equal_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let rem = n % k;
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

/// Assigns every sequence of a surrogate-real dataset to one of `k`
/// cross-validation folds.
///
/// Fold sizes are near-equal (within one of each other) and labels are
/// stratified as evenly as the constraints allow. With `minority_fold`
/// set, fold 0 holds *all* non-Caucasian sequences: it is topped up with
/// Caucasian sequences when the minority group is smaller than a balanced
/// fold, and grows beyond the balanced size when the group is larger (the
/// remaining folds then re-balance among themselves).
pub fn assign_folds<R: Rng>(
    dataset: &SequenceDataset,
    k: usize,
    minority_fold: bool,
    rng: &mut R,
) -> Result<SequenceDataset> {
    let n = dataset.len();
    if k < 2 {
        return Err(Error::Validation(format!("fold count {k} must be at least 2")));
    }
    if k > n {
        return Err(Error::Validation(format!(
            "fold count {k} exceeds dataset size {n}"
        )));
    }
    if let Some(seq) = dataset.sequences.iter().find(|s| s.provenance != Provenance::SurrogateReal)
    {
        return Err(Error::Validation(format!(
            "fold assignment applies to the surrogate-real domain; sequence {} is {}",
            seq.id, seq.provenance
        )));
    }

    let minority: Vec<usize> = (0..n)
        .filter(|&i| dataset.sequences[i].ethnicity != Ethnicity::Caucasian)
        .collect();

    let mut sizes = near_equal_sizes(n, k);
    if minority_fold && minority.len() > sizes[0] {
        // The minority group overflows a balanced fold: give fold 0 the
        // whole group and split the remainder evenly over the rest.
        sizes[0] = minority.len();
        let rest = near_equal_sizes(n - minority.len(), k - 1);
        sizes[1..].copy_from_slice(&rest);
    }

    let mut capacity = sizes.clone();
    let mut fold_of = vec![usize::MAX; n];
    let mut label_counts = vec![[0usize; NUM_CLASSES]; k];

    let mut unassigned: Vec<usize> = (0..n).collect();
    if minority_fold {
        for &i in &minority {
            fold_of[i] = 0;
            capacity[0] -= 1;
            label_counts[0][dataset.sequences[i].label.index()] += 1;
        }
        unassigned.retain(|&i| fold_of[i] == usize::MAX);
    }

    // Greedy stratified dealing: per label group (shuffled), each sequence
    // goes to the emptiest fold, preferring folds that have seen the
    // fewest of that label.
    for label in EmotionLabel::ALL {
        let mut group: Vec<usize> = unassigned
            .iter()
            .copied()
            .filter(|&i| dataset.sequences[i].label == label)
            .collect();
        group.shuffle(rng);
        for i in group {
            let fold = (0..k)
                .filter(|&f| capacity[f] > 0)
                .min_by_key(|&f| {
                    (std::cmp::Reverse(capacity[f]), label_counts[f][label.index()], f)
                })
                .expect("capacities sum to the number of unassigned sequences");
            fold_of[i] = fold;
            capacity[fold] -= 1;
            label_counts[fold][label.index()] += 1;
        }
    }
    debug_assert!(fold_of.iter().all(|&f| f < k));

    let mut out = dataset.clone();
    out.fold_of = Some(fold_of);
    Ok(out)
}

/// Splits a synthetic dataset into identity-disjoint (train, validation)
/// subsets by holding out `n_val_identities` identities chosen uniformly.
/// With the standard 24-identity, 4536-sequence dataset and 5 held-out
/// identities this produces 3591 train and 945 validation sequences.
pub fn split_synthetic_by_identity<R: Rng>(
    dataset: &SequenceDataset,
    n_val_identities: usize,
    rng: &mut R,
) -> Result<(SequenceDataset, SequenceDataset)> {
    if let Some(seq) = dataset.sequences.iter().find(|s| s.provenance != Provenance::Synthetic) {
        return Err(Error::Validation(format!(
            "identity split applies to the synthetic domain; sequence {} is {}",
            seq.id, seq.provenance
        )));
    }
    let mut identities: Vec<String> = dataset.identity_ids().into_iter().collect();
    if n_val_identities >= identities.len() {
        return Err(Error::Validation(format!(
            "cannot hold out {n_val_identities} of {} identities",
            identities.len()
        )));
    }
    identities.shuffle(rng);
    let val_set: std::collections::HashSet<&str> =
        identities[..n_val_identities].iter().map(|s| s.as_str()).collect();

    let (val, train): (Vec<LabeledSequence>, Vec<LabeledSequence>) = dataset
        .sequences
        .iter()
        .cloned()
        .partition(|s| val_set.contains(s.identity_id.as_str()));

    let mut train_meta = dataset.meta.clone();
    train_meta.name = format!("{}-train", dataset.meta.name);
    let mut val_meta = dataset.meta.clone();
    val_meta.name = format!("{}-val", dataset.meta.name);
    Ok((
        SequenceDataset { meta: train_meta, sequences: train, fold_of: None },
        SequenceDataset { meta: val_meta, sequences: val, fold_of: None },
    ))
}

/// Builds one epoch of mixed real + synthetic training data.
///
/// Selects `⌊ratio·(identity count)⌋` synthetic identities without
/// replacement and, for each (identity, signal) pair, exactly one of its
/// rendered viewing angles — so the standard 24-identity dataset
/// contributes `⌊ratio·24⌋·21` sequences (126 at ratio 0.25, 504 at
/// 1.0). The selection is redrawn on every call; the combined list is
/// returned shuffled.
pub fn mixed_ratio_epoch<R: Rng>(
    real_train: &[LabeledSequence],
    synth: &SequenceDataset,
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<LabeledSequence>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Validation(format!("mixing ratio {ratio} outside (0, 1]")));
    }
    if synth.is_empty() {
        return Err(Error::Validation("synthetic dataset is empty".into()));
    }
    if let Some(seq) = synth.sequences.iter().find(|s| s.provenance != Provenance::Synthetic) {
        return Err(Error::Validation(format!(
            "mixed-ratio sampling draws from the synthetic domain; sequence {} is {}",
            seq.id, seq.provenance
        )));
    }

    let mut identities: Vec<String> = synth.identity_ids().into_iter().collect();
    let n_pick = (ratio * identities.len() as f64).floor() as usize;
    identities.shuffle(rng);
    identities.truncate(n_pick);
    let chosen: std::collections::HashSet<&str> =
        identities.iter().map(|s| s.as_str()).collect();

    // Angle variants per (identity, signal), for the chosen identities.
    let mut groups: HashMap<(&str, &str), Vec<&LabeledSequence>> = HashMap::new();
    for seq in &synth.sequences {
        if chosen.contains(seq.identity_id.as_str()) {
            groups
                .entry((seq.identity_id.as_str(), seq.signal_id.as_str()))
                .or_default()
                .push(seq);
        }
    }
    let mut keys: Vec<(&str, &str)> = groups.keys().copied().collect();
    keys.sort_unstable();

    let mut epoch: Vec<LabeledSequence> = real_train.to_vec();
    epoch.reserve(keys.len());
    for key in keys {
        let variants = &groups[&key];
        epoch.push(variants[rng.random_range(0..variants.len())].clone());
    }
    epoch.shuffle(rng);
    Ok(epoch)
}
