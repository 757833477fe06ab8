//! Confusion matrices, derived metrics, and evaluation reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::{EmotionLabel, NUM_CLASSES};

/// A 3×3 confusion matrix: `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> ConfusionMatrix {
        ConfusionMatrix::default()
    }

    pub fn record(&mut self, truth: EmotionLabel, predicted: EmotionLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// Per-true-class test counts.
    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    /// Per-predicted-class counts.
    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0u64; NUM_CLASSES];
        for row in &self.counts {
            for (c, v) in row.iter().enumerate() {
                out[c] += v;
            }
        }
        out
    }

    /// Elementwise sum, used to pool folds.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// CSV with a header row of predicted labels and one row per true label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for label in EmotionLabel::ALL {
            out.push(',');
            out.push_str(label.name());
        }
        out.push('\n');
        for (i, label) in EmotionLabel::ALL.iter().enumerate() {
            out.push_str(label.name());
            for v in self.counts[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>12}", "true\\pred")?;
        for label in EmotionLabel::ALL {
            write!(f, " {:>10}", label.name())?;
        }
        writeln!(f)?;
        for (i, label) in EmotionLabel::ALL.iter().enumerate() {
            write!(f, "{:>12}", label.name())?;
            for v in self.counts[i] {
                write!(f, " {v:>10}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Metrics for one class, in percent. `None` marks an undefined value
/// (zero denominator); the bundle's `flags` explain each one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision_pct: Option<f64>,
    pub recall_pct: Option<f64>,
    pub f1_pct: Option<f64>,
    pub support: u64,
}

/// Accuracy plus per-class and macro-averaged precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy_pct: f64,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub macro_precision_pct: f64,
    pub macro_recall_pct: f64,
    pub macro_f1_pct: f64,
    /// Human-readable notes for every undefined or excluded value.
    pub flags: Vec<String>,
}

/// Derives the metrics bundle from a confusion matrix.
///
/// Precision is diagonal over column sum, recall diagonal over row sum,
/// F1 their harmonic mean. Classes with zero support are excluded from
/// all macro averages; metrics with zero denominators are reported as
/// `None`. Both cases set a flag.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> Result<MetricsBundle> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::UndefinedMetrics(
            "all-zero confusion matrix defines no metrics".into(),
        ));
    }
    let rows = confusion.row_sums();
    let cols = confusion.col_sums();
    let mut flags = Vec::new();
    let mut per_class = [ClassMetrics {
        precision_pct: None,
        recall_pct: None,
        f1_pct: None,
        support: 0,
    }; NUM_CLASSES];
    let (mut p_acc, mut r_acc, mut f_acc) = (Vec::new(), Vec::new(), Vec::new());

    for (c, label) in EmotionLabel::ALL.iter().enumerate() {
        let diag = confusion.counts[c][c] as f64;
        per_class[c].support = rows[c];
        if rows[c] == 0 {
            flags.push(format!(
                "class {} has zero support; excluded from macro averages",
                label.name()
            ));
            continue;
        }
        let recall = 100.0 * diag / rows[c] as f64;
        per_class[c].recall_pct = Some(recall);
        r_acc.push(recall);

        if cols[c] == 0 {
            flags.push(format!(
                "precision undefined for class {}: never predicted",
                label.name()
            ));
            flags.push(format!("f1 undefined for class {}", label.name()));
        } else {
            let precision = 100.0 * diag / cols[c] as f64;
            per_class[c].precision_pct = Some(precision);
            p_acc.push(precision);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class[c].f1_pct = Some(f1);
            f_acc.push(f1);
        }
    }

    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(MetricsBundle {
        accuracy_pct: 100.0 * confusion.trace() as f64 / total as f64,
        per_class,
        macro_precision_pct: mean(&p_acc),
        macro_recall_pct: mean(&r_acc),
        macro_f1_pct: mean(&f_acc),
        flags,
    })
}

/// Accuracy of one demographic subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub correct: u64,
    pub total: u64,
    pub accuracy_pct: f64,
}

impl GroupAccuracy {
    pub fn new(correct: u64, total: u64) -> GroupAccuracy {
        GroupAccuracy {
            correct,
            total,
            accuracy_pct: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
        }
    }
}

/// Per-epoch training telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training batches.
    pub train_loss: f64,
    /// Mean cross-entropy on the held-aside validation set, if any.
    pub val_loss: Option<f64>,
    /// Number of sequences trained on this epoch.
    pub train_size: usize,
}

/// One training phase (pretraining, fine-tuning, …).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub name: String,
    pub epochs: Vec<EpochLog>,
    /// Every sequence id that appeared in a training batch of this phase —
    /// the leakage audit trail.
    pub train_ids: std::collections::BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phases: Vec<PhaseLog>,
}

impl TrainLog {
    /// Whether any training batch contained one of `ids` (leakage probe).
    pub fn saw_any(&self, ids: &[String]) -> bool {
        self.phases.iter().any(|p| ids.iter().any(|id| p.train_ids.contains(id)))
    }
}

/// Evaluation of one trained model on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Echo of the configuration that produced the model.
    pub config: super::ModelConfig,
    pub seed: u64,
    pub test_fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsBundle,
    /// Accuracy keyed by `"ethnicity:<v>"` and `"gender:<v>"`.
    pub group_accuracy: BTreeMap<String, GroupAccuracy>,
    /// Sorted ids of the evaluated sequences.
    pub test_ids: Vec<String>,
    pub train_log: TrainLog,
}

/// Aggregate over all cross-validation folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: super::ModelConfig,
    pub seed: u64,
    pub folds: Vec<EvalReport>,
    /// Elementwise sum of the per-fold confusion matrices.
    pub combined_confusion: ConfusionMatrix,
    /// Metrics of the pooled (summed) confusion matrix.
    pub metrics_pooled: MetricsBundle,
    /// Plain mean of each per-fold metric over folds where it is defined.
    pub metrics_fold_mean: FoldMeanMetrics,
}

/// Fold-averaged headline metrics (percent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMeanMetrics {
    pub accuracy_pct: f64,
    pub macro_precision_pct: f64,
    pub macro_recall_pct: f64,
    pub macro_f1_pct: f64,
}

impl CvReport {
    pub fn from_folds(
        config: super::ModelConfig,
        seed: u64,
        folds: Vec<EvalReport>,
    ) -> Result<CvReport> {
        if folds.is_empty() {
            return Err(Error::Validation("cross-validation produced no folds".into()));
        }
        let mut combined = ConfusionMatrix::new();
        for f in &folds {
            combined.add(&f.confusion);
        }
        let n = folds.len() as f64;
        let mean_of = |f: &dyn Fn(&MetricsBundle) -> f64| {
            folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / n
        };
        Ok(CvReport {
            config,
            seed,
            metrics_pooled: compute_metrics(&combined)?,
            metrics_fold_mean: FoldMeanMetrics {
                accuracy_pct: mean_of(&|m| m.accuracy_pct),
                macro_precision_pct: mean_of(&|m| m.macro_precision_pct),
                macro_recall_pct: mean_of(&|m| m.macro_recall_pct),
                macro_f1_pct: mean_of(&|m| m.macro_f1_pct),
            },
            combined_confusion: combined,
            folds,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:>9.2}"),
        None => format!("{:>9}", "—"),
    }
}

/// Aligned plain-text rendering of one report.
pub fn render_report_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "fold {}  seed {}  sequences {}\n\n",
        report.test_fold,
        report.seed,
        report.test_ids.len()
    ));
    out.push_str(&report.confusion.to_string());
    out.push('\n');
    out.push_str(&render_metrics_text(&report.metrics));
    if !report.group_accuracy.is_empty() {
        out.push_str("\nper-group accuracy\n");
        for (key, g) in &report.group_accuracy {
            out.push_str(&format!(
                "  {key:<22} {:>6.2}%  ({}/{})\n",
                g.accuracy_pct, g.correct, g.total
            ));
        }
    }
    out
}

pub fn render_metrics_text(m: &MetricsBundle) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
        "class", "%prc", "%rec", "%f1", "support"
    ));
    for (c, label) in EmotionLabel::ALL.iter().enumerate() {
        let pc = &m.per_class[c];
        out.push_str(&format!(
            "{:>12} {} {} {} {:>9}\n",
            label.name(),
            fmt_opt(pc.precision_pct),
            fmt_opt(pc.recall_pct),
            fmt_opt(pc.f1_pct),
            pc.support
        ));
    }
    out.push_str(&format!(
        "{:>12} {:>9.2} {:>9.2} {:>9.2}\n",
        "macro", m.macro_precision_pct, m.macro_recall_pct, m.macro_f1_pct
    ));
    out.push_str(&format!("{:>12} {:>9.2}\n", "accuracy", m.accuracy_pct));
    for flag in &m.flags {
        out.push_str(&format!("  note: {flag}\n"));
    }
    out
}

/// Aligned plain-text rendering of a cross-validation summary.
pub fn render_cv_text(cv: &CvReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("cross-validation over {} folds, seed {}\n\n", cv.folds.len(), cv.seed));
    out.push_str(&format!(
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>6}\n",
        "fold", "%acc", "%prc", "%rec", "%f1", "n"
    ));
    for r in &cv.folds {
        out.push_str(&format!(
            "{:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>6}\n",
            r.test_fold,
            r.metrics.accuracy_pct,
            r.metrics.macro_precision_pct,
            r.metrics.macro_recall_pct,
            r.metrics.macro_f1_pct,
            r.test_ids.len()
        ));
    }
    let fm = &cv.metrics_fold_mean;
    out.push_str(&format!(
        "{:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>6}\n",
        "mean",
        fm.accuracy_pct,
        fm.macro_precision_pct,
        fm.macro_recall_pct,
        fm.macro_f1_pct,
        cv.combined_confusion.total()
    ));
    out.push_str("\ncombined confusion matrix (all folds pooled)\n");
    out.push_str(&cv.combined_confusion.to_string());
    out.push_str("\npooled metrics\n");
    out.push_str(&render_metrics_text(&cv.metrics_pooled));
    out
}
