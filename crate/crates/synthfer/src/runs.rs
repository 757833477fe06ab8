//! Run-directory artifacts: persisting training-run reports and merging
//! completed runs into comparison tables.
//!
//! A run directory is immutable once written and contains at least
//! `config.json` (the resolved configuration echo) and `report.json`
//! (a tagged [`RunReport`]), plus human-readable renderings. The
//! [`merge_runs`] operation combines several completed runs: per-run
//! rows with a mean ± standard deviation summary, a pooled confusion
//! matrix, and — for single-fold runs sharing one test fold — optional
//! fairness deltas against a declared base run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{
    compute_metrics, fairness_report, render_cv_text, render_fairness_text, render_metrics_text,
    render_report_text, ConfusionMatrix, CvReport, EvalReport, FairnessTable, MetricsBundle,
};

/// File names inside a run directory.
pub const RUN_CONFIG_FILE: &str = "config.json";
pub const RUN_REPORT_FILE: &str = "report.json";
pub const RUN_TEXT_FILE: &str = "report.txt";
pub const RUN_CONFUSION_FILE: &str = "confusion.csv";

/// The report artifact of one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunReport {
    /// One model evaluated on one held-out fold.
    SingleFold(EvalReport),
    /// Full k-fold cross-validation.
    CrossValidation(CvReport),
}

impl RunReport {
    /// Headline accuracy: the fold accuracy for single-fold runs, the
    /// pooled accuracy for cross-validation runs.
    pub fn accuracy_pct(&self) -> f64 {
        match self {
            RunReport::SingleFold(r) => r.metrics.accuracy_pct,
            RunReport::CrossValidation(cv) => cv.metrics_pooled.accuracy_pct,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunReport::SingleFold(r) => r.seed,
            RunReport::CrossValidation(cv) => cv.seed,
        }
    }

    fn headline_metrics(&self) -> &MetricsBundle {
        match self {
            RunReport::SingleFold(r) => &r.metrics,
            RunReport::CrossValidation(cv) => &cv.metrics_pooled,
        }
    }

    /// The confusion matrix pooled over everything the run evaluated.
    pub fn pooled_confusion(&self) -> &ConfusionMatrix {
        match self {
            RunReport::SingleFold(r) => &r.confusion,
            RunReport::CrossValidation(cv) => &cv.combined_confusion,
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        match self {
            RunReport::SingleFold(r) => render_report_text(r),
            RunReport::CrossValidation(cv) => render_cv_text(cv),
        }
    }
}

/// Writes `report.json`, `report.txt`, and `confusion.csv` into `dir`
/// (created if missing). The caller writes `config.json` separately.
pub fn write_run_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RUN_REPORT_FILE), serde_json::to_string_pretty(report)?)?;
    fs::write(dir.join(RUN_TEXT_FILE), report.to_text())?;
    fs::write(dir.join(RUN_CONFUSION_FILE), report.pooled_confusion().to_csv())?;
    Ok(())
}

/// Loads the `report.json` of a completed run directory.
pub fn load_run_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(RUN_REPORT_FILE);
    let json = fs::read_to_string(&path).map_err(|e| {
        Error::Validation(format!("run directory {}: cannot read report: {e}", dir.display()))
    })?;
    serde_json::from_str(&json)
        .map_err(|e| Error::Manifest(format!("{}: malformed report: {e}", path.display())))
}

/// One run's row in a merged comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub name: String,
    pub seed: u64,
    pub accuracy_pct: f64,
    pub macro_f1_pct: f64,
}

/// Mean ± sample standard deviation of accuracy across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: usize,
    pub mean_accuracy_pct: f64,
    /// Sample standard deviation (n−1); zero for a single run.
    pub std_accuracy_pct: f64,
}

/// The merged view over several completed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub rows: Vec<RunRow>,
    /// Present when more than one run was merged.
    pub summary: Option<SeedSummary>,
    /// Elementwise sum of every run's pooled confusion matrix.
    pub combined_confusion: ConfusionMatrix,
    pub combined_metrics: MetricsBundle,
    /// Fairness deltas; present when a base run was named.
    pub fairness: Option<FairnessTable>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Merges completed runs into one comparison report.
///
/// All runs must be of the same kind. Single-fold runs must share one
/// test fold (a fairness comparison across different folds would be
/// meaningless); naming `base` additionally emits per-variant deltas
/// against that run. Cross-validation runs must agree on the fold count,
/// and `base` is rejected — fairness deltas are defined on a single
/// minority fold.
pub fn merge_runs(named: &[(String, RunReport)], base: Option<&str>) -> Result<MergedReport> {
    if named.is_empty() {
        return Err(Error::Validation("no runs to merge".into()));
    }
    let singles: Vec<(String, &EvalReport)> = named
        .iter()
        .filter_map(|(n, r)| match r {
            RunReport::SingleFold(e) => Some((n.clone(), e)),
            RunReport::CrossValidation(_) => None,
        })
        .collect();
    if !singles.is_empty() && singles.len() != named.len() {
        return Err(Error::Validation(
            "cannot merge single-fold and cross-validation runs together".into(),
        ));
    }

    let fairness = if singles.is_empty() {
        if let Some(base) = base {
            return Err(Error::Validation(format!(
                "fairness base {base:?} given, but fairness deltas apply to \
                 single-fold runs only"
            )));
        }
        let folds0 = match &named[0].1 {
            RunReport::CrossValidation(cv) => cv.folds.len(),
            RunReport::SingleFold(_) => unreachable!("handled above"),
        };
        for (name, report) in named {
            let RunReport::CrossValidation(cv) = report else { unreachable!("handled above") };
            if cv.folds.len() != folds0 {
                return Err(Error::Validation(format!(
                    "run {name:?} used {} folds, others {folds0}",
                    cv.folds.len()
                )));
            }
        }
        None
    } else {
        let fold0 = singles[0].1.test_fold;
        if let Some((name, report)) = singles.iter().find(|(_, r)| r.test_fold != fold0) {
            return Err(Error::Validation(format!(
                "run {name:?} was evaluated on fold {}, others on fold {fold0}",
                report.test_fold
            )));
        }
        match base {
            Some(base) => {
                let owned: Vec<(String, EvalReport)> =
                    singles.iter().map(|(n, r)| (n.clone(), (*r).clone())).collect();
                Some(fairness_report(&owned, base)?)
            }
            None => None,
        }
    };

    let mut combined = ConfusionMatrix::new();
    let mut rows = Vec::with_capacity(named.len());
    for (name, report) in named {
        combined.add(report.pooled_confusion());
        let metrics = report.headline_metrics();
        rows.push(RunRow {
            name: name.clone(),
            seed: report.seed(),
            accuracy_pct: metrics.accuracy_pct,
            macro_f1_pct: metrics.macro_f1_pct,
        });
    }
    let summary = (rows.len() > 1).then(|| {
        let accs: Vec<f64> = rows.iter().map(|r| r.accuracy_pct).collect();
        let (mean, std) = mean_std(&accs);
        SeedSummary { runs: rows.len(), mean_accuracy_pct: mean, std_accuracy_pct: std }
    });
    Ok(MergedReport {
        combined_metrics: compute_metrics(&combined)?,
        combined_confusion: combined,
        rows,
        summary,
        fairness,
    })
}

/// Aligned plain-text rendering of a merged report.
pub fn render_merged_text(merged: &MergedReport) -> String {
    let width = merged.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$} {:>12} {:>9} {:>9}\n", "run", "seed", "%acc", "%f1");
    for row in &merged.rows {
        out.push_str(&format!(
            "{:<width$} {:>12} {:>9.2} {:>9.2}\n",
            row.name, row.seed, row.accuracy_pct, row.macro_f1_pct
        ));
    }
    if let Some(s) = &merged.summary {
        out.push_str(&format!(
            "{:<width$} {:>12} {:>6.2} ± {:.2}\n",
            "mean", format!("{} runs", s.runs), s.mean_accuracy_pct, s.std_accuracy_pct
        ));
    }
    if let Some(fairness) = &merged.fairness {
        out.push('\n');
        out.push_str(&render_fairness_text(fairness));
    }
    out.push_str("\ncombined confusion matrix\n");
    out.push_str(&merged.combined_confusion.to_string());
    out.push('\n');
    out.push_str(&render_metrics_text(&merged.combined_metrics));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::testutil::report_with;

    fn single(name: &str, correct: u64, fold: usize, seed: u64) -> (String, RunReport) {
        let mut report = report_with(correct, 75, fold);
        report.seed = seed;
        (name.to_string(), RunReport::SingleFold(report))
    }

    fn cv_run(name: &str, corrects: [u64; 2], seed: u64) -> (String, RunReport) {
        let folds: Vec<EvalReport> =
            corrects.iter().enumerate().map(|(f, &c)| report_with(c, 75, f)).collect();
        let config = folds[0].config.clone();
        let mut cv = CvReport::from_folds(config, seed, folds).unwrap();
        cv.seed = seed;
        (name.to_string(), RunReport::CrossValidation(cv))
    }

    #[test]
    fn single_run_merges_without_deltas() {
        let merged = merge_runs(&[single("a", 60, 0, 1)], None).unwrap();
        assert_eq!(merged.rows.len(), 1);
        assert!(merged.summary.is_none());
        assert!(merged.fairness.is_none());
        assert_eq!(merged.combined_confusion.total(), 75);
    }

    #[test]
    fn multi_seed_rows_and_mean_std() {
        let runs = vec![cv_run("s1", [60, 66], 1), cv_run("s2", [66, 72], 2)];
        let merged = merge_runs(&runs, None).unwrap();
        assert_eq!(merged.rows.len(), 2);
        let s = merged.summary.unwrap();
        // Pooled accuracies: 126/150 = 84%, 138/150 = 92%; the sample
        // standard deviation of {84, 92} is sqrt(32).
        assert!((s.mean_accuracy_pct - 88.0).abs() < 1e-9);
        assert!((s.std_accuracy_pct - 32f64.sqrt()).abs() < 1e-9);
        assert_eq!(merged.combined_confusion.total(), 300);
    }

    #[test]
    fn fairness_base_produces_delta_rows() {
        let runs = vec![single("frozen", 54, 0, 1), single("unfrozen", 66, 0, 1)];
        let merged = merge_runs(&runs, Some("frozen")).unwrap();
        let table = merged.fairness.unwrap();
        assert!((table.rows[1].delta_pct - 16.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_folds_rejected() {
        let runs = vec![single("a", 60, 0, 1), single("b", 60, 1, 1)];
        let err = merge_runs(&runs, None).unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn mixing_kinds_and_cv_base_rejected() {
        let runs = vec![single("a", 60, 0, 1), cv_run("b", [60, 66], 1)];
        assert!(merge_runs(&runs, None).is_err());
        let runs = vec![cv_run("a", [60, 66], 1)];
        assert!(merge_runs(&runs, Some("a")).is_err());
        assert!(merge_runs(&[], None).is_err());
    }

    #[test]
    fn report_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let (_, report) = single("r", 66, 2, 9);
        write_run_report(dir.path(), &report).unwrap();
        let back = load_run_report(dir.path()).unwrap();
        assert_eq!(report, back);
        assert!(dir.path().join(RUN_TEXT_FILE).exists());
        assert!(dir.path().join(RUN_CONFUSION_FILE).exists());
        // The tag survives serialization.
        let raw = std::fs::read_to_string(dir.path().join(RUN_REPORT_FILE)).unwrap();
        assert!(raw.contains("\"kind\": \"single-fold\""));
    }

    #[test]
    fn missing_report_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_run_report(dir.path()).unwrap_err();
        assert!(err.is_validation(), "{err}");
    }
}
