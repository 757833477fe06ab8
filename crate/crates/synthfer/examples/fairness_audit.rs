//! Fairness audit on the minority fold: does synthetic pretraining
//! close the demographic gap?
//!
//! Fold 0 of the surrogate-real partition holds every non-Caucasian
//! sequence, so accuracy on that fold is the fairness probe. The audit
//! runs the 2x2 ablation {first three blocks frozen, unfrozen} x
//! {real data only, synthetic pretraining} against the weakest
//! configuration as base; the two pretrained arms share one
//! pretraining pass. Freezing without pretraining pins random
//! features, which is exactly the ablation's point.
//!
//! The pretrain schedule is shortened here to keep the example around
//! two minutes; the full protocol uses 20 pretrain epochs.
//!
//! Run with: `cargo run --example fairness_audit`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthfer::dataio::assign_folds;
use synthfer::nn::InceptionTimeConfig;
use synthfer::pipeline::{minority_fold_audit, render_fairness_text, StrategySpec};
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
    println!(
        "minority fold holds {} of {} sequences\n",
        real.fold_members(0).len(),
        real.len()
    );

    let mut spec = StrategySpec::pretrain_finetune();
    spec.pretrain_epochs = 4; // shortened for the example
    spec.freeze_blocks = 3;
    let audit =
        minority_fold_audit(&spec, &InceptionTimeConfig::default(), &synth, &real, 0, 0)?;

    println!("{}", render_fairness_text(&audit.table));

    // Demographic breakdown of the strongest variant.
    let best = audit
        .variants
        .iter()
        .max_by(|a, b| a.1.metrics.accuracy_pct.total_cmp(&b.1.metrics.accuracy_pct))
        .expect("variants non-empty");
    println!("group accuracy for {:?}:", best.0);
    for (group, acc) in &best.1.group_accuracy {
        println!("  {:<20} {:>5.1}%  ({}/{})", group, acc.accuracy_pct, acc.correct, acc.total);
    }
    Ok(())
}
