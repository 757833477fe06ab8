//! Mixed-ratio training: synthetic sequences resampled into every epoch.
//!
//! At ratio 0.25 each epoch draws floor(0.25 * 24) * 21 = 126 synthetic
//! sequences — a fresh random viewing angle for every chosen
//! (identity, signal) pair — and shuffles them into the real training
//! folds. The example first shows one such epoch composition directly,
//! then trains on fold 0 and checks the per-epoch size invariant that
//! the training log records.
//!
//! Run with: `cargo run --example mixed_ratio_training`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthfer::dataio::{assign_folds, mixed_ratio_epoch, Provenance};
use synthfer::pipeline::{render_report_text, run_strategy, StrategySpec};
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

    // One epoch's composition, taken directly from the sampler.
    let train_folds: Vec<_> = real.fold_complement(0).into_iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let epoch = mixed_ratio_epoch(&train_folds, &synth, 0.25, &mut rng)?;
    let synth_count = epoch.iter().filter(|s| s.provenance == Provenance::Synthetic).count();
    println!(
        "one epoch at ratio 0.25: {} sequences = {} real + {} synthetic",
        epoch.len(),
        epoch.len() - synth_count,
        synth_count
    );

    // Full training run on fold 0.
    let spec = StrategySpec::mixed(0.25);
    let (_, report) = run_strategy(&spec, Some(&synth), &real, 0, 0)?;
    let phase = &report.train_log.phases[0];
    let sizes: Vec<usize> = phase.epochs.iter().map(|e| e.train_size).collect();
    println!(
        "\nphase {}: every epoch saw {} sequences ({} epochs)",
        phase.name,
        sizes[0],
        sizes.len()
    );
    assert!(sizes.iter().all(|&s| s == train_folds.len() + synth_count));
    println!("\n{}", render_report_text(&report));
    Ok(())
}
