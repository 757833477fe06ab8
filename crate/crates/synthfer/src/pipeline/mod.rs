//! Training strategies, cross-validation, and fairness reporting.
//!
//! Three strategies are supported:
//!
//! * **real-only** — train on the four training folds of the
//!   surrogate-real dataset, test on the held-out fold;
//! * **pretrain-finetune** — pretrain on an identity-disjoint synthetic
//!   train split (validation loss logged on the held-out identities),
//!   then fine-tune on the real training folds, optionally with an
//!   initial prefix of blocks frozen;
//! * **mixed** — every epoch trains on the real folds plus a freshly
//!   resampled mixed-ratio draw of synthetic sequences.
//!
//! All runs are deterministic in the run seed: per-phase rng streams are
//! derived from it, batch order is a seeded shuffle, and test-time
//! inference (center windows, eval-mode batch norm) never consults an
//! rng. Pretraining depends only on the seed — not on the test fold — so
//! [`cross_validate`] pretrains once and fine-tunes a clone per fold,
//! bit-identical to running [`run_strategy`] per fold from scratch.

mod fairness;
mod metrics;

pub use fairness::{
    fairness_report, minority_fold_audit, render_fairness_text, FairnessRow, FairnessTable,
    MinorityFoldAudit, AUDIT_VARIANTS,
};
pub use metrics::{
    compute_metrics, render_cv_text, render_metrics_text, render_report_text, ClassMetrics,
    ConfusionMatrix, CvReport, EpochLog, EvalReport, FoldMeanMetrics, GroupAccuracy,
    MetricsBundle, PhaseLog, TrainLog,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    mixed_ratio_epoch, normalize_length, split_synthetic_by_identity, LabeledSequence,
    LengthPolicy, SequenceDataset,
};
use crate::dtwknn::{knn_classify, DtwConfig};
use crate::error::{Error, Result};
use crate::nn::{
    softmax_ce_backward, softmax_ce_forward, Adam, AdamConfig, BatchTensor, ForwardMode,
    InceptionTime, InceptionTimeConfig,
};
use crate::signalgen::{EmotionLabel, NUM_CLASSES};

/// Which of the three training strategies to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    RealOnly,
    PretrainFinetune,
    MixedRatio,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::RealOnly => "real-only",
            StrategyKind::PretrainFinetune => "pretrain-finetune",
            StrategyKind::MixedRatio => "mixed",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of a training run: strategy, schedule, freezing, and
/// input-length policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Synthetic pretraining epochs (pretrain-finetune only).
    pub pretrain_epochs: usize,
    /// Epochs of the real-data (or mixed) phase.
    pub finetune_epochs: usize,
    /// Synthetic mixing ratio; present iff `kind` is `MixedRatio`. The
    /// standard grid is 0.25 / 0.5 / 1.0.
    pub ratio: Option<f64>,
    /// Number of leading inception blocks frozen during the real-data
    /// phase (pretraining always runs unfrozen).
    pub freeze_blocks: usize,
    /// Target input length; 25 and 64 are the standard settings.
    pub target_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl StrategySpec {
    fn base(kind: StrategyKind, ratio: Option<f64>) -> StrategySpec {
        StrategySpec {
            kind,
            pretrain_epochs: 20,
            finetune_epochs: 50,
            ratio,
            freeze_blocks: 0,
            target_len: 25,
            learning_rate: 1e-4,
            batch_size: 8,
        }
    }

    pub fn real_only() -> StrategySpec {
        StrategySpec::base(StrategyKind::RealOnly, None)
    }

    pub fn pretrain_finetune() -> StrategySpec {
        StrategySpec::base(StrategyKind::PretrainFinetune, None)
    }

    pub fn mixed(ratio: f64) -> StrategySpec {
        StrategySpec::base(StrategyKind::MixedRatio, Some(ratio))
    }

    /// The best-performing configuration of the reference study: mixed
    /// sampling at ratio 0.25 with 64-frame inputs.
    pub fn recommended() -> StrategySpec {
        StrategySpec { target_len: 64, ..StrategySpec::mixed(0.25) }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.ratio) {
            (StrategyKind::MixedRatio, None) => {
                return Err(Error::Validation(
                    "mixed strategy requires a mixing ratio".into(),
                ));
            }
            (StrategyKind::MixedRatio, Some(r)) if !(r > 0.0 && r <= 1.0) => {
                return Err(Error::Validation(format!("mixing ratio {r} outside (0, 1]")));
            }
            (StrategyKind::RealOnly | StrategyKind::PretrainFinetune, Some(_)) => {
                return Err(Error::Validation(format!(
                    "mixing ratio is only meaningful for the mixed strategy, not {}",
                    self.kind
                )));
            }
            _ => {}
        }
        if self.finetune_epochs == 0 {
            return Err(Error::Validation("finetune_epochs must be >= 1".into()));
        }
        if self.kind == StrategyKind::PretrainFinetune && self.pretrain_epochs == 0 {
            return Err(Error::Validation("pretrain_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        LengthPolicy::train(self.target_len).validate()
    }
}

/// Configuration echo embedded in every report: which model produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelConfig {
    #[serde(rename = "inception-time")]
    InceptionTime { strategy: StrategySpec, network: InceptionTimeConfig },
    #[serde(rename = "knn-dtw")]
    KnnDtw { k: usize, band: Option<usize> },
}

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

const STREAM_INIT: u64 = 1;
const STREAM_PRETRAIN: u64 = 2;
const STREAM_TRAIN_BASE: u64 = 3;

/// SplitMix64-style derivation of independent sub-seeds from one run
/// seed. Initialization and pretraining use fold-independent streams so
/// that a pretrained model is shared verbatim across folds; the real-data
/// phase stream differs per test fold.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn train_stream(test_fold: usize) -> u64 {
    STREAM_TRAIN_BASE + test_fold as u64
}

// ---------------------------------------------------------------------------
// Training internals
// ---------------------------------------------------------------------------

/// One optimization epoch: seeded shuffle, random-window length
/// normalization, forward/backward/Adam per mini-batch. Returns the mean
/// per-sequence cross-entropy and records every trained id in `seen`.
fn train_epoch<R: Rng>(
    model: &mut InceptionTime<f32>,
    adam: &mut Adam,
    data: &[&LabeledSequence],
    policy: LengthPolicy,
    batch_size: usize,
    rng: &mut R,
    seen: &mut BTreeSet<String>,
) -> Result<f64> {
    debug_assert!(!data.is_empty());
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);

    let mut loss_sum = 0.0f64;
    for chunk in order.chunks(batch_size) {
        let batch: Vec<LabeledSequence> =
            chunk.iter().map(|&i| normalize_length(data[i], policy, rng)).collect();
        let refs: Vec<&LabeledSequence> = batch.iter().collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| data[i].label.index()).collect();
        let x = BatchTensor::from_sequences(&refs)?;

        model.zero_grad();
        let logits = model.forward(&x, ForwardMode::Train)?;
        let (loss, probs) = softmax_ce_forward(&logits, &labels)?;
        let grad = softmax_ce_backward::<f32>(&probs, &labels, NUM_CLASSES);
        model.backward(&grad)?;
        adam.step(model)?;

        loss_sum += loss * chunk.len() as f64;
        for &i in chunk {
            seen.insert(data[i].id.clone());
        }
    }
    Ok(loss_sum / data.len() as f64)
}

/// Mean per-sequence cross-entropy in eval mode (center windows, running
/// batch-norm statistics, no parameter updates, no rng).
fn eval_loss(
    model: &mut InceptionTime<f32>,
    data: &[&LabeledSequence],
    policy: LengthPolicy,
    batch_size: usize,
) -> Result<f64> {
    debug_assert!(!data.is_empty());
    // The center-window policy ignores the rng; a throwaway satisfies the
    // signature without touching any training stream.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0f64;
    for chunk in data.chunks(batch_size) {
        let batch: Vec<LabeledSequence> =
            chunk.iter().map(|s| normalize_length(s, policy, &mut rng)).collect();
        let refs: Vec<&LabeledSequence> = batch.iter().collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label.index()).collect();
        let x = BatchTensor::from_sequences(&refs)?;
        let logits = model.forward(&x, ForwardMode::Eval)?;
        let (loss, _) = softmax_ce_forward(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
    }
    Ok(loss_sum / data.len() as f64)
}

/// Argmax with ties broken toward the lowest class index.
fn argmax_class(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = c;
        }
    }
    best
}

/// Evaluates a model on a test set: confusion matrix, per-group accuracy
/// keyed by `ethnicity:` / `gender:`, and the sorted test ids.
fn evaluate_model(
    model: &mut InceptionTime<f32>,
    test: &[&LabeledSequence],
    policy: LengthPolicy,
    batch_size: usize,
) -> Result<(ConfusionMatrix, BTreeMap<String, GroupAccuracy>, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // never consulted (center windows)
    let mut confusion = ConfusionMatrix::new();
    let mut tallies: BTreeMap<String, (u64, u64)> = BTreeMap::new();

    for chunk in test.chunks(batch_size) {
        let batch: Vec<LabeledSequence> =
            chunk.iter().map(|s| normalize_length(s, policy, &mut rng)).collect();
        let refs: Vec<&LabeledSequence> = batch.iter().collect();
        let x = BatchTensor::from_sequences(&refs)?;
        let probs = model.predict_proba(&x)?;
        for (b, seq) in chunk.iter().enumerate() {
            let row = &probs[b * NUM_CLASSES..(b + 1) * NUM_CLASSES];
            let predicted = EmotionLabel::from_index(argmax_class(row))
                .expect("argmax over NUM_CLASSES probabilities");
            record_prediction(&mut confusion, &mut tallies, seq, predicted);
        }
    }
    let (groups, ids) = finish_groups(tallies, test);
    Ok((confusion, groups, ids))
}

fn record_prediction(
    confusion: &mut ConfusionMatrix,
    tallies: &mut BTreeMap<String, (u64, u64)>,
    seq: &LabeledSequence,
    predicted: EmotionLabel,
) {
    confusion.record(seq.label, predicted);
    let hit = u64::from(predicted == seq.label);
    for key in [format!("ethnicity:{}", seq.ethnicity), format!("gender:{}", seq.gender)] {
        let entry = tallies.entry(key).or_insert((0, 0));
        entry.0 += hit;
        entry.1 += 1;
    }
}

fn finish_groups(
    tallies: BTreeMap<String, (u64, u64)>,
    test: &[&LabeledSequence],
) -> (BTreeMap<String, GroupAccuracy>, Vec<String>) {
    let groups = tallies
        .into_iter()
        .map(|(k, (correct, total))| (k, GroupAccuracy::new(correct, total)))
        .collect();
    let mut ids: Vec<String> = test.iter().map(|s| s.id.clone()).collect();
    ids.sort_unstable();
    (groups, ids)
}

/// Picks the synthetic validation holdout size: 5 identities for the
/// standard 24-identity suite (the 3591/945 split), proportionally fewer
/// for smaller suites, and none when the suite is too small to spare one.
fn validation_identities(identity_count: usize) -> usize {
    let n = (identity_count as f64 * 5.0 / 24.0).round() as usize;
    n.min(identity_count.saturating_sub(1))
}

/// A model ready for its real-data phase, plus the phases already logged.
struct PreparedModel {
    model: InceptionTime<f32>,
    phases: Vec<PhaseLog>,
}

/// Initializes the network and, for pretrain-finetune, runs the synthetic
/// pretraining phase. Depends only on `(spec, network, synth, seed)` —
/// never on the test fold — so cross-validation shares the result.
fn prepare_model(
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: Option<&SequenceDataset>,
    seed: u64,
) -> Result<PreparedModel> {
    let mut model = InceptionTime::<f32>::new(*network, derive_seed(seed, STREAM_INIT))?;
    let mut phases = Vec::new();

    if spec.kind == StrategyKind::PretrainFinetune {
        let synth = synth.expect("checked by run prelude");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PRETRAIN));
        let n_val = validation_identities(synth.identity_ids().len());
        let (train, val) = split_synthetic_by_identity(synth, n_val, &mut rng)?;
        let train_refs: Vec<&LabeledSequence> = train.sequences.iter().collect();
        let val_refs: Vec<&LabeledSequence> = val.sequences.iter().collect();

        let mut adam = Adam::new(AdamConfig::new(spec.learning_rate))?;
        let mut phase = PhaseLog {
            name: "pretrain-synthetic".to_string(),
            epochs: Vec::new(),
            train_ids: BTreeSet::new(),
        };
        let policy = LengthPolicy::train(spec.target_len);
        for epoch in 1..=spec.pretrain_epochs {
            let train_loss = train_epoch(
                &mut model,
                &mut adam,
                &train_refs,
                policy,
                spec.batch_size,
                &mut rng,
                &mut phase.train_ids,
            )?;
            let val_loss = if val_refs.is_empty() {
                None
            } else {
                Some(eval_loss(
                    &mut model,
                    &val_refs,
                    LengthPolicy::test(spec.target_len),
                    spec.batch_size,
                )?)
            };
            phase.epochs.push(EpochLog {
                epoch,
                train_loss,
                val_loss,
                train_size: train_refs.len(),
            });
        }
        phases.push(phase);
    }

    Ok(PreparedModel { model, phases })
}

/// Validates the shared preconditions of a strategy run and returns the
/// fold count.
fn check_run_inputs(
    spec: &StrategySpec,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
) -> Result<usize> {
    spec.validate()?;
    let folds = real
        .fold_count()
        .ok_or_else(|| Error::Validation("real dataset has no fold assignments".into()))?;
    if folds < 2 {
        return Err(Error::Validation(format!(
            "real dataset needs at least 2 folds, found {folds}"
        )));
    }
    if spec.kind != StrategyKind::RealOnly && synth.is_none() {
        return Err(Error::Validation(format!(
            "the {} strategy requires a synthetic dataset",
            spec.kind
        )));
    }
    Ok(folds)
}

/// Runs the real-data phase on a prepared model and evaluates on the
/// held-out fold.
fn finish_run(
    mut prepared: PreparedModel,
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    test_fold: usize,
    seed: u64,
) -> Result<(InceptionTime<f32>, EvalReport)> {
    let train_refs = real.fold_complement(test_fold);
    let test_refs = real.fold_members(test_fold);
    if test_refs.is_empty() {
        return Err(Error::Validation(format!("test fold {test_fold} is empty")));
    }
    if train_refs.is_empty() {
        return Err(Error::Validation(format!(
            "no training sequences outside fold {test_fold}"
        )));
    }

    let model = &mut prepared.model;
    model.set_freeze(spec.freeze_blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, train_stream(test_fold)));
    let mut adam = Adam::new(AdamConfig::new(spec.learning_rate))?;
    let policy = LengthPolicy::train(spec.target_len);

    let (phase_name, real_owned): (&str, Option<Vec<LabeledSequence>>) = match spec.kind {
        StrategyKind::RealOnly => ("train-real", None),
        StrategyKind::PretrainFinetune => ("finetune-real", None),
        StrategyKind::MixedRatio => (
            "train-mixed",
            Some(train_refs.iter().map(|s| (*s).clone()).collect()),
        ),
    };
    let mut phase = PhaseLog {
        name: phase_name.to_string(),
        epochs: Vec::new(),
        train_ids: BTreeSet::new(),
    };

    for epoch in 1..=spec.finetune_epochs {
        let (train_loss, train_size) = match spec.kind {
            StrategyKind::MixedRatio => {
                let epoch_data = mixed_ratio_epoch(
                    real_owned.as_deref().expect("materialized above"),
                    synth.expect("checked by run prelude"),
                    spec.ratio.expect("validated"),
                    &mut rng,
                )?;
                let refs: Vec<&LabeledSequence> = epoch_data.iter().collect();
                let loss = train_epoch(
                    model,
                    &mut adam,
                    &refs,
                    policy,
                    spec.batch_size,
                    &mut rng,
                    &mut phase.train_ids,
                )?;
                (loss, refs.len())
            }
            _ => {
                let loss = train_epoch(
                    model,
                    &mut adam,
                    &train_refs,
                    policy,
                    spec.batch_size,
                    &mut rng,
                    &mut phase.train_ids,
                )?;
                (loss, train_refs.len())
            }
        };
        phase.epochs.push(EpochLog { epoch, train_loss, val_loss: None, train_size });
    }
    prepared.phases.push(phase);

    let (confusion, group_accuracy, test_ids) = evaluate_model(
        &mut prepared.model,
        &test_refs,
        LengthPolicy::test(spec.target_len),
        spec.batch_size,
    )?;
    let report = EvalReport {
        config: ModelConfig::InceptionTime { strategy: *spec, network: *network },
        seed,
        test_fold,
        metrics: compute_metrics(&confusion)?,
        confusion,
        group_accuracy,
        test_ids,
        train_log: TrainLog { phases: prepared.phases },
    };
    Ok((prepared.model, report))
}

/// Trains one model under `spec` and evaluates it on `test_fold`.
///
/// `real` must carry fold assignments; `synth` is required unless the
/// strategy is real-only. Uses the standard network configuration; see
/// [`run_strategy_with_network`] to vary it.
pub fn run_strategy(
    spec: &StrategySpec,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    test_fold: usize,
    seed: u64,
) -> Result<(InceptionTime<f32>, EvalReport)> {
    run_strategy_with_network(spec, &InceptionTimeConfig::default(), synth, real, test_fold, seed)
}

/// [`run_strategy`] with an explicit network configuration.
pub fn run_strategy_with_network(
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    test_fold: usize,
    seed: u64,
) -> Result<(InceptionTime<f32>, EvalReport)> {
    let folds = check_run_inputs(spec, synth, real)?;
    if test_fold >= folds {
        return Err(Error::Validation(format!(
            "test fold {test_fold} out of range for {folds} folds"
        )));
    }
    let prepared = prepare_model(spec, network, synth, seed)?;
    finish_run(prepared, spec, network, synth, real, test_fold, seed)
}

/// Runs every fold job, optionally on `jobs` worker threads. Results are
/// merged by fold index, so the outcome is independent of scheduling.
fn run_folds<T, F>(k: usize, jobs: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs <= 1 || k <= 1 {
        return (0..k).map(job).collect();
    }
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..k).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(k) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= k {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("fold slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("fold slot lock").expect("every fold runs"))
        .collect()
}

/// Full k-fold cross-validation of a strategy: every fold serves as the
/// test fold once, each with a freshly prepared model.
///
/// `jobs > 1` fine-tunes folds concurrently; the report is bit-identical
/// to the serial run. Returns per-fold reports plus the pooled summary.
pub fn cross_validate(
    spec: &StrategySpec,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    seed: u64,
    jobs: usize,
) -> Result<CvReport> {
    cross_validate_with_network(spec, &InceptionTimeConfig::default(), synth, real, seed, jobs)
}

/// [`cross_validate`] with an explicit network configuration.
pub fn cross_validate_with_network(
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    seed: u64,
    jobs: usize,
) -> Result<CvReport> {
    cross_validate_full(spec, network, synth, real, seed, jobs).map(|(cv, _)| cv)
}

/// [`cross_validate_with_network`] that also returns the trained model of
/// every fold, in fold order, for checkpointing.
pub fn cross_validate_full(
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: Option<&SequenceDataset>,
    real: &SequenceDataset,
    seed: u64,
    jobs: usize,
) -> Result<(CvReport, Vec<InceptionTime<f32>>)> {
    let folds = check_run_inputs(spec, synth, real)?;
    // Initialization and pretraining are fold-independent; prepare once
    // and clone per fold.
    let prepared = prepare_model(spec, network, synth, seed)?;
    let outcomes = run_folds(folds, jobs, |fold| {
        let clone = PreparedModel {
            model: prepared.model.clone(),
            phases: prepared.phases.clone(),
        };
        finish_run(clone, spec, network, synth, real, fold, seed)
    })?;
    let (models, reports): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let cv = CvReport::from_folds(
        ModelConfig::InceptionTime { strategy: *spec, network: *network },
        seed,
        reports,
    )?;
    Ok((cv, models))
}

/// Evaluates an already-trained model on one fold of a real dataset,
/// e.g. after loading a checkpoint. The report carries an empty training
/// log and echoes the given configuration.
pub fn evaluate_on_fold(
    model: &mut InceptionTime<f32>,
    config: ModelConfig,
    real: &SequenceDataset,
    test_fold: usize,
    target_len: usize,
    batch_size: usize,
    seed: u64,
) -> Result<EvalReport> {
    let folds = real
        .fold_count()
        .ok_or_else(|| Error::Validation("real dataset has no fold assignments".into()))?;
    if test_fold >= folds {
        return Err(Error::Validation(format!(
            "test fold {test_fold} out of range for {folds} folds"
        )));
    }
    let test = real.fold_members(test_fold);
    if test.is_empty() {
        return Err(Error::Validation(format!("test fold {test_fold} is empty")));
    }
    let (confusion, group_accuracy, test_ids) =
        evaluate_model(model, &test, LengthPolicy::test(target_len), batch_size.max(1))?;
    Ok(EvalReport {
        config,
        seed,
        test_fold,
        metrics: compute_metrics(&confusion)?,
        confusion,
        group_accuracy,
        test_ids,
        train_log: TrainLog::default(),
    })
}

// ---------------------------------------------------------------------------
// KNN-DTW baseline
// ---------------------------------------------------------------------------

/// Evaluates the KNN-DTW baseline on one held-out fold. The classifier
/// memorizes the training folds at native length (DTW aligns differing
/// lengths directly) and is entirely deterministic, so reports carry
/// seed 0.
pub fn knn_evaluate(
    real: &SequenceDataset,
    test_fold: usize,
    k_neighbors: usize,
    dtw: &DtwConfig,
) -> Result<EvalReport> {
    let folds = real
        .fold_count()
        .ok_or_else(|| Error::Validation("real dataset has no fold assignments".into()))?;
    if test_fold >= folds {
        return Err(Error::Validation(format!(
            "test fold {test_fold} out of range for {folds} folds"
        )));
    }
    let train = real.fold_complement(test_fold);
    let test = real.fold_members(test_fold);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(format!("fold {test_fold} splits to an empty side")));
    }

    let mut confusion = ConfusionMatrix::new();
    let mut tallies: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for query in &test {
        let predicted = knn_classify(&train, query, k_neighbors, dtw)?;
        record_prediction(&mut confusion, &mut tallies, query, predicted);
    }
    let (group_accuracy, test_ids) = finish_groups(tallies, &test);

    let train_ids: BTreeSet<String> = train.iter().map(|s| s.id.clone()).collect();
    Ok(EvalReport {
        config: ModelConfig::KnnDtw { k: k_neighbors, band: dtw.band },
        seed: 0,
        test_fold,
        metrics: compute_metrics(&confusion)?,
        confusion,
        group_accuracy,
        test_ids,
        train_log: TrainLog {
            phases: vec![PhaseLog {
                name: "knn-reference-set".to_string(),
                epochs: Vec::new(),
                train_ids,
            }],
        },
    })
}

/// K-fold cross-validation of the KNN-DTW baseline.
pub fn knn_cross_validate(
    real: &SequenceDataset,
    k_neighbors: usize,
    dtw: &DtwConfig,
    jobs: usize,
) -> Result<CvReport> {
    let folds = real
        .fold_count()
        .ok_or_else(|| Error::Validation("real dataset has no fold assignments".into()))?;
    let reports = run_folds(folds, jobs, |fold| knn_evaluate(real, fold, k_neighbors, dtw))?;
    CvReport::from_folds(ModelConfig::KnnDtw { k: k_neighbors, band: dtw.band }, 0, reports)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::dataio::{DatasetMeta, Provenance};
    use crate::signalgen::{
        canonical_signals, generate_identity_suite, generate_synthetic_dataset, Ethnicity,
        Gender, NoiseConfig, ViewingAngle, NUM_CHANNELS,
    };

    /// Small network for fast strategy tests.
    pub fn tiny_network() -> InceptionTimeConfig {
        InceptionTimeConfig {
            input_channels: NUM_CHANNELS,
            classes: NUM_CLASSES,
            depth: 2,
            bottleneck_channels: 4,
            branch_filters: 4,
            kernels: [9, 5, 3],
            residual_every: 2,
        }
    }

    /// A linearly separable toy dataset: the class is the index of the
    /// channel with the largest mean intensity.
    pub fn toy_real_dataset(per_class: usize) -> SequenceDataset {
        let mut sequences = Vec::new();
        for class in 0..NUM_CLASSES {
            for j in 0..per_class {
                let jitter = 0.02 * (j % 5) as f32;
                let values: Vec<[f32; NUM_CHANNELS]> = (0..25)
                    .map(|t| {
                        std::array::from_fn(|c| {
                            let base = 0.1 + 0.01 * ((t + c) % 3) as f32;
                            if c == class {
                                0.85 + jitter
                            } else {
                                base
                            }
                        })
                    })
                    .collect();
                sequences.push(LabeledSequence {
                    id: format!("toy-{class}-{j}"),
                    values,
                    label: EmotionLabel::from_index(class).unwrap(),
                    signal_id: format!("toy-sig-{class}"),
                    identity_id: format!("toy-id-{j}"),
                    gender: if j % 2 == 0 { Gender::Female } else { Gender::Male },
                    ethnicity: if j % 3 == 0 { Ethnicity::Asian } else { Ethnicity::Caucasian },
                    angle: ViewingAngle::frontal(),
                    provenance: Provenance::SurrogateReal,
                    native_len: 25,
                });
            }
        }
        let mut ds = SequenceDataset::new(DatasetMeta::new("toy", 0), sequences).unwrap();
        // Alternate folds within each class: both folds see every class.
        let n = ds.len();
        ds.fold_of = Some((0..n).map(|i| i % 2).collect());
        ds
    }

    /// A real synthetic dataset kept small by using a single angle.
    pub fn small_synth() -> SequenceDataset {
        generate_synthetic_dataset(
            &generate_identity_suite(7),
            &canonical_signals(),
            &[ViewingAngle::frontal()],
            &NoiseConfig::none(),
            3,
        )
        .unwrap()
    }

    /// An EvalReport whose accuracy is exactly `correct`/`total` on
    /// `fold`, with the errors confined to class 0's off-diagonal.
    pub fn report_with(correct: u64, total: u64, fold: usize) -> EvalReport {
        assert!(total.is_multiple_of(3) && total - correct <= total / 3);
        let mut confusion = ConfusionMatrix::new();
        let per = total / 3;
        confusion.counts[0][0] = per - (total - correct);
        confusion.counts[0][1] = total - correct;
        confusion.counts[1][1] = per;
        confusion.counts[2][2] = per;
        let metrics = compute_metrics(&confusion).unwrap();
        EvalReport {
            config: ModelConfig::InceptionTime {
                strategy: StrategySpec::real_only(),
                network: InceptionTimeConfig::default(),
            },
            seed: 0,
            test_fold: fold,
            confusion,
            metrics,
            group_accuracy: BTreeMap::new(),
            test_ids: Vec::new(),
            train_log: TrainLog::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::{small_synth, tiny_network, toy_real_dataset};
    use super::*;
    use crate::dataio::assign_folds;
    use crate::signalgen::{generate_surrogate_real, NoiseConfig};

    fn surrogate() -> SequenceDataset {
        let ds = generate_surrogate_real(11, &NoiseConfig::surrogate_default(), 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assign_folds(&ds, 5, true, &mut rng).unwrap()
    }

    #[test]
    fn strategy_spec_validation() {
        assert!(StrategySpec::real_only().validate().is_ok());
        assert!(StrategySpec::mixed(0.25).validate().is_ok());
        // ratio present iff mixed
        let mut spec = StrategySpec::mixed(0.25);
        spec.ratio = None;
        assert!(spec.validate().is_err());
        let mut spec = StrategySpec::real_only();
        spec.ratio = Some(0.5);
        assert!(spec.validate().is_err());
        let mut spec = StrategySpec::mixed(1.5);
        assert!(spec.validate().is_err());
        spec = StrategySpec::pretrain_finetune();
        spec.pretrain_epochs = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn real_only_separates_toy_dataset_perfectly() {
        let real = toy_real_dataset(8);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 40;
        // The toy problem is tiny; a larger step reaches the separating
        // solution within the short schedule.
        spec.learning_rate = 3e-3;
        let (_, report) =
            run_strategy_with_network(&spec, &tiny_network(), None, &real, 0, 17).unwrap();
        assert_eq!(
            report.metrics.accuracy_pct, 100.0,
            "confusion:\n{}",
            report.confusion
        );
        // Row sums equal the per-class test counts (4 each in fold 0).
        assert_eq!(report.confusion.row_sums(), [4, 4, 4]);
    }

    #[test]
    fn run_strategy_is_deterministic() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 3;
        let net = tiny_network();
        let (model_a, report_a) =
            run_strategy_with_network(&spec, &net, None, &real, 1, 5).unwrap();
        let (model_b, report_b) =
            run_strategy_with_network(&spec, &net, None, &real, 1, 5).unwrap();
        assert_eq!(report_a, report_b);
        // Weights agree bitwise.
        let mut a_params: Vec<u32> = Vec::new();
        let mut model_a = model_a;
        model_a.for_each_param(&mut |p| a_params.extend(p.data.iter().map(|v| v.to_bits())));
        let mut b_params: Vec<u32> = Vec::new();
        let mut model_b = model_b;
        model_b.for_each_param(&mut |p| b_params.extend(p.data.iter().map(|v| v.to_bits())));
        assert_eq!(a_params, b_params);
    }

    #[test]
    fn different_seeds_differ() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 2;
        let net = tiny_network();
        let (_, a) = run_strategy_with_network(&spec, &net, None, &real, 0, 1).unwrap();
        let (_, b) = run_strategy_with_network(&spec, &net, None, &real, 0, 2).unwrap();
        assert_ne!(
            a.train_log.phases[0].epochs, b.train_log.phases[0].epochs,
            "distinct seeds should shuffle and window differently"
        );
    }

    #[test]
    fn mixed_epoch_size_invariant_holds_every_epoch() {
        let real = surrogate();
        let synth = small_synth();
        let mut spec = StrategySpec::mixed(0.25);
        spec.finetune_epochs = 2;
        let (_, report) =
            run_strategy_with_network(&spec, &tiny_network(), Some(&synth), &real, 0, 3).unwrap();
        let real_train = real.fold_complement(0).len();
        let phase = report.train_log.phases.last().unwrap();
        assert_eq!(phase.epochs.len(), 2);
        for epoch in &phase.epochs {
            assert_eq!(epoch.train_size, real_train + 126, "epoch {}", epoch.epoch);
        }
    }

    #[test]
    fn pretrain_logs_validation_loss_and_never_sees_real_ids() {
        let real = surrogate();
        let synth = small_synth();
        let mut spec = StrategySpec::pretrain_finetune();
        spec.pretrain_epochs = 1;
        spec.finetune_epochs = 1;
        let (_, report) =
            run_strategy_with_network(&spec, &tiny_network(), Some(&synth), &real, 2, 9).unwrap();

        let phases = &report.train_log.phases;
        assert_eq!(phases.len(), 2);
        assert_eq!(phases[0].name, "pretrain-synthetic");
        assert!(phases[0].epochs[0].val_loss.is_some());
        // 24 identities, 21 signals, 1 angle -> 504 sequences; 5 held-out
        // identities leave 399 for training.
        assert_eq!(phases[0].epochs[0].train_size, 399);

        // Pretraining touches only synthetic ids; neither phase ever sees
        // a test-fold id.
        let real_ids: Vec<String> = real.sequences.iter().map(|s| s.id.clone()).collect();
        assert!(!phases[0].train_ids.iter().any(|id| real_ids.contains(id)));
        assert!(!report.train_log.saw_any(&report.test_ids));
    }

    #[test]
    fn test_fold_ids_never_in_training_log() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 2;
        let (_, report) =
            run_strategy_with_network(&spec, &tiny_network(), None, &real, 0, 21).unwrap();
        assert!(!report.train_log.saw_any(&report.test_ids));
        // Sanity: the log does contain the complement.
        let complement_id = real.fold_complement(0)[0].id.clone();
        assert!(report.train_log.saw_any(&[complement_id]));
    }

    #[test]
    fn run_prelude_validation_errors() {
        let real = surrogate();
        let mut no_folds = real.clone();
        no_folds.fold_of = None;
        let spec = StrategySpec::real_only();
        assert!(run_strategy(&spec, None, &no_folds, 0, 0).is_err());
        assert!(run_strategy(&spec, None, &real, 9, 0).is_err());
        // Synth required unless real-only.
        let err = run_strategy(&StrategySpec::mixed(0.25), None, &real, 0, 0).unwrap_err();
        assert!(err.is_validation(), "{err}");
        let err =
            run_strategy(&StrategySpec::pretrain_finetune(), None, &real, 0, 0).unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn cross_validate_partitions_and_pools() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 2;
        let cv =
            cross_validate_with_network(&spec, &tiny_network(), None, &real, 13, 1).unwrap();
        assert_eq!(cv.folds.len(), 2);

        // Every sequence appears in exactly one test fold.
        let mut seen = BTreeSet::new();
        for fold in &cv.folds {
            for id in &fold.test_ids {
                assert!(seen.insert(id.clone()), "{id} tested twice");
            }
        }
        assert_eq!(seen.len(), real.len());

        // Combined matrix is the elementwise sum of the fold matrices.
        let mut summed = ConfusionMatrix::new();
        for fold in &cv.folds {
            summed.add(&fold.confusion);
        }
        assert_eq!(cv.combined_confusion, summed);
        assert_eq!(cv.combined_confusion.total(), real.len() as u64);
    }

    #[test]
    fn cross_validate_matches_run_strategy_per_fold() {
        // The pretrain-once optimization must be invisible: fold reports
        // from cross_validate equal standalone run_strategy reports.
        let real = surrogate();
        let synth = small_synth();
        let mut spec = StrategySpec::pretrain_finetune();
        spec.pretrain_epochs = 1;
        spec.finetune_epochs = 1;
        let net = tiny_network();
        let cv =
            cross_validate_with_network(&spec, &net, Some(&synth), &real, 31, 1).unwrap();
        let (_, standalone) =
            run_strategy_with_network(&spec, &net, Some(&synth), &real, 3, 31).unwrap();
        assert_eq!(cv.folds[3], standalone);
    }

    #[test]
    fn parallel_folds_match_serial() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 2;
        let net = tiny_network();
        let serial = cross_validate_with_network(&spec, &net, None, &real, 11, 1).unwrap();
        let parallel = cross_validate_with_network(&spec, &net, None, &real, 11, 4).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn knn_cross_validation_covers_all_sequences() {
        let real = surrogate();
        let cv = knn_cross_validate(&real, 1, &DtwConfig::unconstrained(), 1).unwrap();
        assert_eq!(cv.folds.len(), 5);
        assert_eq!(cv.combined_confusion.total(), 123);
        let tested: usize = cv.folds.iter().map(|f| f.test_ids.len()).sum();
        assert_eq!(tested, 123);
        // Minority fold holds 26 sequences.
        assert_eq!(cv.folds[0].test_ids.len(), 26);
        // Fully deterministic: a second run is identical.
        let again = knn_cross_validate(&real, 1, &DtwConfig::unconstrained(), 1).unwrap();
        assert_eq!(cv, again);
    }

    #[test]
    fn knn_report_carries_groups_and_leakage_log() {
        let real = surrogate();
        let report = knn_evaluate(&real, 0, 3, &DtwConfig::unconstrained()).unwrap();
        assert_eq!(report.confusion.total(), 26);
        assert!(report.group_accuracy.keys().any(|k| k.starts_with("ethnicity:")));
        assert!(report.group_accuracy.keys().any(|k| k.starts_with("gender:")));
        assert!(!report.train_log.saw_any(&report.test_ids));
        assert!(matches!(report.config, ModelConfig::KnnDtw { k: 3, band: None }));
    }

    #[test]
    fn evaluation_is_rng_free_and_repeatable() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 2;
        let (mut model, report) =
            run_strategy_with_network(&spec, &tiny_network(), None, &real, 0, 2).unwrap();
        let test = real.fold_members(0);
        let policy = LengthPolicy::test(spec.target_len);
        let (c1, _, _) = evaluate_model(&mut model, &test, policy, 8).unwrap();
        let (c2, _, _) = evaluate_model(&mut model, &test, policy, 8).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1, report.confusion);
    }

    #[test]
    fn report_serializes_to_json_and_back() {
        let real = toy_real_dataset(4);
        let mut spec = StrategySpec::real_only();
        spec.finetune_epochs = 1;
        let (_, report) =
            run_strategy_with_network(&spec, &tiny_network(), None, &real, 0, 2).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
        // The text rendering mentions the headline number.
        let text = render_report_text(&report);
        assert!(text.contains("accuracy"));
    }

    #[test]
    fn validation_identity_counts() {
        assert_eq!(validation_identities(24), 5);
        assert_eq!(validation_identities(1), 0);
        assert_eq!(validation_identities(2), 0);
        assert_eq!(validation_identities(5), 1);
        assert_eq!(validation_identities(48), 10);
    }
}
