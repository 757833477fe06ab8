//! Command-line entry point: `generate`, `train`, `eval`, `report`, and
//! `gradcheck` subcommands over the `synthfer` library.
//!
//! Every run writes into its own directory: the fully resolved
//! configuration (`config.json`), a machine-readable report
//! (`report.json`), an aligned text rendering (`report.txt`), and the
//! confusion matrix as CSV (`confusion.csv`). Existing non-empty output
//! directories are refused unless `--force` replaces them. Exit codes:
//! 0 success, 2 validation error (bad flags, bad inputs), 1 runtime
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use synthfer::dataio::{assign_folds, load_dataset, save_dataset, SequenceDataset};
use synthfer::dtwknn::DtwConfig;
use synthfer::error::{Error, Result};
use synthfer::nn::{
    grad_check, load_checkpoint, save_checkpoint, BatchTensor, InceptionTime,
    InceptionTimeConfig,
};
use synthfer::pipeline::{
    cross_validate_full, evaluate_on_fold, knn_cross_validate, knn_evaluate, run_strategy,
    ModelConfig, StrategyKind, StrategySpec,
};
use synthfer::runs::{
    load_run_report, merge_runs, render_merged_text, write_run_report, RunReport,
    RUN_CONFIG_FILE, RUN_CONFUSION_FILE, RUN_REPORT_FILE, RUN_TEXT_FILE,
};
use synthfer::signalgen::{
    angle_grid, canonical_signals, generate_identity_suite, generate_surrogate_real,
    generate_synthetic_dataset, NoiseConfig, NUM_CHANNELS, NUM_CLASSES,
};

#[derive(Parser)]
#[command(
    name = "synthfer",
    about = "Sim2Real facial-expression pipeline: dataset generation, training, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic and surrogate-real datasets.
    Generate(GenerateArgs),
    /// Train a classifier under one strategy, single-fold or full CV.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on one fold of a real dataset.
    Eval(EvalArgs),
    /// Merge completed run directories into a comparison report.
    Report(ReportArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Output directory (will contain synthetic/ and surrogate-real/).
    #[arg(long)]
    out: PathBuf,
    /// Master seed; sub-seeds for the suite and both renders derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use only the first N identities of the 24-identity suite.
    #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(1..=24))]
    identities: u64,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Directory of the surrogate-real dataset (from `generate`).
    #[arg(long)]
    real: PathBuf,
    /// Directory of the synthetic dataset; required unless the strategy
    /// is real-only.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Training strategy.
    #[arg(long, value_parser = ["real-only", "pretrain-finetune", "mixed"])]
    strategy: String,
    /// Classifier family.
    #[arg(long, default_value = "inception", value_parser = ["inception", "knn"])]
    model: String,
    /// Synthetic mixing ratio (mixed strategy only; 0.25 / 0.5 / 1.0).
    #[arg(long)]
    ratio: Option<f64>,
    /// Input length L.
    #[arg(long, default_value_t = 25)]
    len: usize,
    /// Leading inception blocks frozen during the real-data phase.
    #[arg(long, default_value_t = 0)]
    freeze: usize,
    /// Synthetic pretraining epochs (pretrain-finetune only).
    #[arg(long, default_value_t = 20)]
    pretrain_epochs: usize,
    /// Real-phase epochs.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Mini-batch size.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Evaluate this single fold only; omit for full cross-validation.
    #[arg(long)]
    fold: Option<usize>,
    /// Fold-level worker threads; keep 1 for bit-reproducibility audits
    /// (results are identical either way).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Neighbor count for the KNN baseline.
    #[arg(long, default_value_t = 1)]
    knn_k: usize,
    /// Sakoe-Chiba band for DTW; omit for unconstrained alignment.
    #[arg(long)]
    dtw_band: Option<usize>,
    /// 5-fold assignment over the real dataset if it has none: fold 0
    /// gathers all non-Caucasian sequences (uses the run seed).
    #[arg(long)]
    assign_folds: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Checkpoint directory (model.json + weights.bin).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of the real dataset to evaluate on.
    #[arg(long)]
    real: PathBuf,
    /// Fold to evaluate.
    #[arg(long)]
    fold: usize,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Input length L (evaluation-time setting).
    #[arg(long, default_value_t = 25)]
    len: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// 5-fold assignment as in `train --assign-folds` (seed 0).
    #[arg(long)]
    assign_folds: bool,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Completed run directories to merge.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Run (by path, as given) serving as the fairness base; single-fold
    /// runs on a common fold only.
    #[arg(long)]
    base: Option<String>,
    /// Directory for the merged artifacts; omit to print only.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    /// Sampled parameter coordinates.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Maximum relative error accepted.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Batch size of the probe input.
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Probe input length.
    #[arg(long, default_value_t = 25)]
    len: usize,
}

/// Refuses to write into an existing non-empty directory unless `force`,
/// in which case the directory is replaced.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::Validation(format!(
                "output directory {} exists and is not empty; pass --force to replace it",
                dir.display()
            )));
        }
        if non_empty {
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_config<A: Serialize>(dir: &Path, command: &str, args: &A) -> Result<()> {
    #[derive(Serialize)]
    struct Echo<'a, A> {
        command: &'a str,
        #[serde(flatten)]
        args: &'a A,
    }
    let echo = Echo { command, args };
    fs::write(dir.join(RUN_CONFIG_FILE), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}

// Sub-seed offsets for `generate`; echoed via config.json.
const SUITE_SEED_OFFSET: u64 = 0;
const SYNTH_SEED_OFFSET: u64 = 1;
const SURROGATE_SUITE_OFFSET: u64 = 2;
const SURROGATE_SEED_OFFSET: u64 = 3;

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    prepare_out_dir(&args.out, args.force)?;
    write_config(&args.out, "generate", args)?;

    let mut suite = generate_identity_suite(args.seed.wrapping_add(SUITE_SEED_OFFSET));
    suite.truncate(args.identities as usize);
    let synthetic = generate_synthetic_dataset(
        &suite,
        &canonical_signals(),
        &angle_grid(),
        &NoiseConfig::synthetic_default(),
        args.seed.wrapping_add(SYNTH_SEED_OFFSET),
    )?;
    save_dataset(&synthetic, &args.out.join("synthetic"))?;

    let surrogate = generate_surrogate_real(
        args.seed.wrapping_add(SURROGATE_SUITE_OFFSET),
        &NoiseConfig::surrogate_default(),
        args.seed.wrapping_add(SURROGATE_SEED_OFFSET),
    )?;
    save_dataset(&surrogate, &args.out.join("surrogate-real"))?;

    let counts = surrogate.label_counts();
    println!(
        "synthetic: {} sequences ({} identities x {} signals x {} angles)",
        synthetic.len(),
        suite.len(),
        canonical_signals().len(),
        angle_grid().len()
    );
    println!(
        "surrogate-real: {} sequences ({}/{}/{} per class)",
        surrogate.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

/// Loads the real dataset, assigning minority-aware folds when asked and
/// absent.
fn load_real(path: &Path, do_assign: bool, seed: u64) -> Result<SequenceDataset> {
    let real = load_dataset(path)?;
    if real.fold_of.is_some() || !do_assign {
        return Ok(real);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assign_folds(&real, 5, true, &mut rng)
}

fn strategy_from_args(args: &TrainArgs) -> Result<StrategySpec> {
    let kind = match args.strategy.as_str() {
        "real-only" => StrategyKind::RealOnly,
        "pretrain-finetune" => StrategyKind::PretrainFinetune,
        "mixed" => StrategyKind::MixedRatio,
        other => return Err(Error::Validation(format!("unknown strategy {other:?}"))),
    };
    let spec = StrategySpec {
        kind,
        pretrain_epochs: args.pretrain_epochs,
        finetune_epochs: args.epochs,
        ratio: args.ratio,
        freeze_blocks: args.freeze,
        target_len: args.len,
        learning_rate: args.lr,
        batch_size: args.batch,
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    // Resolve and validate everything before touching the filesystem or
    // starting to train.
    let real = load_real(&args.real, args.assign_folds, args.seed)?;
    let synth = args.synthetic.as_deref().map(load_dataset).transpose()?;

    if args.model == "knn" {
        if args.strategy != "real-only" {
            return Err(Error::Validation(
                "the KNN baseline supports the real-only strategy; it has no \
                 gradient training to pretrain or mix into"
                    .into(),
            ));
        }
        let dtw = match args.dtw_band {
            Some(band) => DtwConfig::banded(band),
            None => DtwConfig::unconstrained(),
        };
        dtw.validate()?;
        prepare_out_dir(&args.out, args.force)?;
        write_config(&args.out, "train", args)?;
        let report = match args.fold {
            Some(fold) => RunReport::SingleFold(knn_evaluate(&real, fold, args.knn_k, &dtw)?),
            None => {
                RunReport::CrossValidation(knn_cross_validate(&real, args.knn_k, &dtw, args.jobs)?)
            }
        };
        write_run_report(&args.out, &report)?;
        println!("{}", report.to_text());
        return Ok(());
    }

    let spec = strategy_from_args(args)?;
    let network = InceptionTimeConfig::default();
    prepare_out_dir(&args.out, args.force)?;
    write_config(&args.out, "train", args)?;

    match args.fold {
        Some(fold) => {
            let (mut model, report) =
                run_strategy(&spec, synth.as_ref(), &real, fold, args.seed)?;
            let epochs = spec.finetune_epochs
                + if spec.kind == StrategyKind::PretrainFinetune { spec.pretrain_epochs } else { 0 };
            save_checkpoint(&mut model, &args.out.join("checkpoint"), epochs)?;
            let report = RunReport::SingleFold(report);
            write_run_report(&args.out, &report)?;
            println!("{}", report.to_text());
        }
        None => {
            let (cv, mut models) = cross_validate_full(
                &spec,
                &network,
                synth.as_ref(),
                &real,
                args.seed,
                args.jobs,
            )?;
            let epochs = spec.finetune_epochs
                + if spec.kind == StrategyKind::PretrainFinetune { spec.pretrain_epochs } else { 0 };
            // Each fold is itself a loadable single-fold run directory.
            for (fold, (model, fold_report)) in
                models.iter_mut().zip(&cv.folds).enumerate()
            {
                let fold_dir = args.out.join(format!("fold-{fold}"));
                fs::create_dir_all(&fold_dir)?;
                write_config(&fold_dir, "train", args)?;
                write_run_report(&fold_dir, &RunReport::SingleFold(fold_report.clone()))?;
                save_checkpoint(model, &fold_dir.join("checkpoint"), epochs)?;
            }
            let report = RunReport::CrossValidation(cv);
            write_run_report(&args.out, &report)?;
            println!("{}", report.to_text());
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (mut model, meta) = load_checkpoint::<f32>(&args.checkpoint)?;
    let real = load_real(&args.real, args.assign_folds, 0)?;
    prepare_out_dir(&args.out, args.force)?;
    write_config(&args.out, "eval", args)?;

    // The config echo reflects evaluation-time settings; the original
    // training configuration lives with the checkpoint's own run.
    let mut strategy = StrategySpec::real_only();
    strategy.target_len = args.len;
    strategy.freeze_blocks = meta.frozen_prefix;
    let config = ModelConfig::InceptionTime { strategy, network: meta.config };
    let report = evaluate_on_fold(
        &mut model,
        config,
        &real,
        args.fold,
        args.len,
        args.batch,
        meta.init_seed,
    )?;
    let report = RunReport::SingleFold(report);
    write_run_report(&args.out, &report)?;
    println!("{}", report.to_text());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut named = Vec::with_capacity(args.runs.len());
    for path in &args.runs {
        named.push((path.display().to_string(), load_run_report(path)?));
    }
    let merged = merge_runs(&named, args.base.as_deref())?;
    let text = render_merged_text(&merged);
    if let Some(out) = &args.out {
        prepare_out_dir(out, args.force)?;
        write_config(out, "report", args)?;
        fs::write(out.join(RUN_REPORT_FILE), serde_json::to_string_pretty(&merged)?)?;
        fs::write(out.join(RUN_TEXT_FILE), &text)?;
        fs::write(out.join(RUN_CONFUSION_FILE), merged.combined_confusion.to_csv())?;
    }
    println!("{text}");
    Ok(())
}

/// Reduced network for gradient checking: depth 2, under 2k parameters.
fn gradcheck_network() -> InceptionTimeConfig {
    InceptionTimeConfig {
        input_channels: NUM_CHANNELS,
        classes: NUM_CLASSES,
        depth: 2,
        bottleneck_channels: 4,
        branch_filters: 6,
        kernels: [11, 7, 3],
        residual_every: 2,
    }
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.batch == 0 || args.len == 0 || args.samples == 0 {
        return Err(Error::Validation("batch, len, and samples must be >= 1".into()));
    }
    let cfg = gradcheck_network();
    let mut model = InceptionTime::<f64>::new(cfg, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let mut x = BatchTensor::<f64>::zeros(args.batch, cfg.input_channels, args.len);
    for v in x.as_mut_slice() {
        *v = rng.random_range(0.0..1.0);
    }
    let labels: Vec<usize> =
        (0..args.batch).map(|_| rng.random_range(0..cfg.classes)).collect();

    let report = grad_check(&mut model, &x, &labels, args.samples, args.tolerance, args.seed)?;
    println!(
        "checked {} of {} parameters: max rel err {:.3e}, mean {:.3e}, max abs diff {:.3e} \
         (tolerance {:.1e})",
        report.coords_checked,
        model.param_count(),
        report.max_rel_error,
        report.mean_rel_error,
        report.max_abs_diff,
        report.tolerance
    );
    if let Some((tensor, index, analytic, numeric)) = &report.worst {
        println!("worst: {tensor}[{index}] analytic {analytic:.6e} vs numeric {numeric:.6e}");
    }
    if report.passed {
        println!("gradient check PASSED");
        Ok(())
    } else {
        Err(Error::Contract("gradient check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_validation() => {
            eprintln!("validation error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
