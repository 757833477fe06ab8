//! Fairness comparison across training variants on the minority fold.

use serde::{Deserialize, Serialize};

use crate::dataio::SequenceDataset;
use crate::error::{Error, Result};
use crate::nn::InceptionTimeConfig;
use crate::pipeline::{
    check_run_inputs, finish_run, prepare_model, run_strategy_with_network, EvalReport,
    PreparedModel, StrategyKind, StrategySpec,
};

/// One variant's minority-fold accuracy and its delta against the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessRow {
    pub variant: String,
    pub accuracy_pct: f64,
    /// Accuracy minus the base variant's accuracy, in points.
    pub delta_pct: f64,
}

/// Minority-fold comparison table: every variant against a declared base
/// (conventionally the frozen, no-synthetic-data configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessTable {
    pub base: String,
    /// The common held-out fold all variants were evaluated on.
    pub test_fold: usize,
    pub rows: Vec<FairnessRow>,
}

/// Builds the comparison table from named variant reports.
///
/// All reports must share one test fold — the audit is only meaningful
/// when every variant is scored on the same minority fold — and `base`
/// must name one of the variants. Rows keep the given order.
pub fn fairness_report(variants: &[(String, EvalReport)], base: &str) -> Result<FairnessTable> {
    if variants.is_empty() {
        return Err(Error::Validation("fairness report needs at least one variant".into()));
    }
    let base_report = variants
        .iter()
        .find(|(name, _)| name == base)
        .map(|(_, report)| report)
        .ok_or_else(|| {
            Error::Validation(format!("base variant {base:?} missing from the report set"))
        })?;
    let test_fold = base_report.test_fold;
    if let Some((name, report)) = variants.iter().find(|(_, r)| r.test_fold != test_fold) {
        return Err(Error::Validation(format!(
            "variant {name:?} was evaluated on fold {}, base on fold {test_fold}; \
             fairness deltas require a common fold",
            report.test_fold
        )));
    }

    let base_acc = base_report.metrics.accuracy_pct;
    let rows = variants
        .iter()
        .map(|(name, report)| FairnessRow {
            variant: name.clone(),
            accuracy_pct: report.metrics.accuracy_pct,
            delta_pct: report.metrics.accuracy_pct - base_acc,
        })
        .collect();
    Ok(FairnessTable { base: base.to_string(), test_fold, rows })
}

/// The four ablation arms of the minority-fold audit, in table order:
/// the 2x2 of {frozen, unfrozen} x {real data only, synthetic
/// pretraining}. The first entry is the comparison base.
pub const AUDIT_VARIANTS: [&str; 4] = [
    "frozen, real only",
    "unfrozen, real only",
    "frozen, pretrained",
    "unfrozen, pretrained",
];

/// Result of [`minority_fold_audit`]: the four variant reports plus the
/// delta table against the frozen real-only base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorityFoldAudit {
    /// `(variant name, report)` in [`AUDIT_VARIANTS`] order.
    pub variants: Vec<(String, EvalReport)>,
    pub table: FairnessTable,
}

/// Runs the four-variant ablation on one held-out fold.
///
/// `spec` fixes the shared schedule; its `kind` must be
/// pretrain-finetune and its `freeze_blocks` (>= 1) is the depth of the
/// frozen arms' prefix — the frozen real-only arm therefore trains on
/// top of *untrained* frozen features, which is the ablation's point.
/// The two pretrained arms share a single synthetic pretraining pass;
/// every arm's report is nonetheless bit-identical to a standalone
/// [`run_strategy_with_network`] call with that arm's configuration,
/// because initialization and pretraining never depend on the freeze
/// setting.
pub fn minority_fold_audit(
    spec: &StrategySpec,
    network: &InceptionTimeConfig,
    synth: &SequenceDataset,
    real: &SequenceDataset,
    test_fold: usize,
    seed: u64,
) -> Result<MinorityFoldAudit> {
    if spec.kind != StrategyKind::PretrainFinetune {
        return Err(Error::Validation(format!(
            "audit spec must be pretrain-finetune, got {}",
            spec.kind
        )));
    }
    if spec.freeze_blocks == 0 {
        return Err(Error::Validation(
            "audit spec needs freeze_blocks >= 1 for the frozen arms".into(),
        ));
    }
    let folds = check_run_inputs(spec, Some(synth), real)?;
    if test_fold >= folds {
        return Err(Error::Validation(format!(
            "test fold {test_fold} out of range for {folds} folds"
        )));
    }

    let frozen = spec.freeze_blocks;
    let mut variants: Vec<(String, EvalReport)> = Vec::new();

    // Real-only arms: nothing to share, plain runs.
    for (name, freeze) in [(AUDIT_VARIANTS[0], frozen), (AUDIT_VARIANTS[1], 0)] {
        let arm = StrategySpec { kind: StrategyKind::RealOnly, freeze_blocks: freeze, ..*spec };
        let (_, report) =
            run_strategy_with_network(&arm, network, None, real, test_fold, seed)?;
        variants.push((name.to_string(), report));
    }

    // Pretrained arms: one pretraining pass, two fine-tunes.
    let prepared = prepare_model(spec, network, Some(synth), seed)?;
    for (name, freeze) in [(AUDIT_VARIANTS[2], frozen), (AUDIT_VARIANTS[3], 0)] {
        let arm = StrategySpec { freeze_blocks: freeze, ..*spec };
        let clone = PreparedModel {
            model: prepared.model.clone(),
            phases: prepared.phases.clone(),
        };
        let (_, report) =
            finish_run(clone, &arm, network, Some(synth), real, test_fold, seed)?;
        variants.push((name.to_string(), report));
    }

    let table = fairness_report(&variants, AUDIT_VARIANTS[0])?;
    Ok(MinorityFoldAudit { variants, table })
}

/// Aligned plain-text rendering of a fairness table.
pub fn render_fairness_text(table: &FairnessTable) -> String {
    let width = table.rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut out = format!(
        "minority-fold comparison (fold {}), base: {}\n{:<width$} {:>8} {:>8}\n",
        table.test_fold, table.base, "variant", "%acc", "Δ%acc"
    );
    for row in &table.rows {
        out.push_str(&format!(
            "{:<width$} {:>8.2} {:>+8.2}\n",
            row.variant, row.accuracy_pct, row.delta_pct
        ));
    }
    out
}
