//! Sim2Real transfer: pretrain on synthetic data, fine-tune on real.
//!
//! Pretrains the classifier on the 4536-sequence synthetic dataset
//! (with a synthetic identity-disjoint validation split), fine-tunes on
//! the real training folds, and evaluates on held-out fold 0. The
//! pretrain schedule is shortened here so the example stays around two
//! minutes; the full protocol uses 20 pretrain epochs.
//!
//! Afterwards the trained model round-trips through a checkpoint
//! directory and the reloaded copy is shown to reproduce the exact same
//! confusion matrix.
//!
//! Run with: `cargo run --example pretrain_finetune`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthfer::dataio::assign_folds;
use synthfer::nn::{load_checkpoint, save_checkpoint, InceptionTimeConfig};
use synthfer::pipeline::{
    evaluate_on_fold, render_report_text, run_strategy, ModelConfig, StrategySpec,
};
use synthfer::signalgen::{
    angle_grid, canonical_signals, generate_identity_suite, generate_surrogate_real,
    generate_synthetic_dataset, NoiseConfig,
};

fn main() -> synthfer::Result<()> {
    let suite = generate_identity_suite(1);
    let synth = generate_synthetic_dataset(
        &suite,
        &canonical_signals(),
        &angle_grid(),
        &NoiseConfig::synthetic_default(),
        2,
    )?;
    let real = generate_surrogate_real(5, &NoiseConfig::surrogate_default(), 6)?;
    let real = assign_folds(&real, 5, true, &mut ChaCha8Rng::seed_from_u64(17))?;
    println!("synthetic: {} sequences; real: {} sequences\n", synth.len(), real.len());

    let mut spec = StrategySpec::pretrain_finetune();
    spec.pretrain_epochs = 5; // shortened for the example
    let (mut model, report) = run_strategy(&spec, Some(&synth), &real, 0, 0)?;

    for phase in &report.train_log.phases {
        let first = phase.epochs.first().expect("phase has epochs");
        let last = phase.epochs.last().expect("phase has epochs");
        print!(
            "phase {:<18} {} epochs, {} sequences, train loss {:.4} -> {:.4}",
            phase.name,
            phase.epochs.len(),
            last.train_size,
            first.train_loss,
            last.train_loss,
        );
        match (first.val_loss, last.val_loss) {
            (Some(a), Some(b)) => println!(", val loss {a:.4} -> {b:.4}"),
            _ => println!(),
        }
    }
    println!("\n{}", render_report_text(&report));

    // Round-trip the fine-tuned weights through the on-disk format and
    // verify the reloaded model scores the fold identically.
    let dir = std::env::temp_dir().join("synthfer-example-checkpoint");
    save_checkpoint(&mut model, &dir, spec.pretrain_epochs + spec.finetune_epochs)?;
    let (mut reloaded, meta) = load_checkpoint::<f32>(&dir)?;
    println!(
        "checkpoint: {} tensors, {} weight bytes, epoch {}",
        meta.tensors.len(),
        meta.weights_len_bytes,
        meta.epoch
    );
    let config = ModelConfig::InceptionTime {
        strategy: spec,
        network: InceptionTimeConfig::default(),
    };
    let again =
        evaluate_on_fold(&mut reloaded, config, &real, 0, spec.target_len, spec.batch_size, 0)?;
    assert_eq!(again.confusion, report.confusion);
    println!("reloaded model reproduces the confusion matrix exactly");
    Ok(())
}
