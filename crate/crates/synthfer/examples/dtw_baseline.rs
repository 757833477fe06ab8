//! The distance-based baseline: 1-nearest-neighbor classification under
//! multivariate dynamic time warping, cross-validated on the
//! surrogate-real dataset.
//!
//! Also demonstrates the Sakoe-Chiba band: a narrow band speeds up the
//! distance at the cost of alignment freedom, and a band smaller than
//! the length gap between two sequences is rejected as infeasible.
//!
//! Run with: `cargo run --example dtw_baseline`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use synthfer::dataio::assign_folds;
use synthfer::dtwknn::{dtw_distance, DtwConfig};
use synthfer::pipeline::{knn_cross_validate, render_cv_text};
use synthfer::signalgen::{generate_surrogate_real, NoiseConfig};

fn main() -> synthfer::Result<()> {
    let real = generate_surrogate_real(11, &NoiseConfig::surrogate_default(), 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let real = assign_folds(&real, 5, true, &mut rng)?;

    // Band behavior on one concrete pair.
    let a = &real.sequences[0];
    let b = &real.sequences[1];
    println!(
        "sequence lengths: {} vs {} (gap {})",
        a.len(),
        b.len(),
        a.len().abs_diff(b.len())
    );
    let unconstrained = dtw_distance(&a.values, &b.values, &DtwConfig::unconstrained())?;
    println!("unconstrained DTW distance: {unconstrained:.4}");
    for band in [64, 16, 8] {
        match dtw_distance(&a.values, &b.values, &DtwConfig::banded(band)) {
            Ok(d) => println!("band {band:>3}: {d:.4} ({:+.2}%)", 100.0 * (d - unconstrained) / unconstrained),
            Err(e) => println!("band {band:>3}: {e}"),
        }
    }
    // A band narrower than the length gap cannot reach the corner cell.
    let err = dtw_distance(&a.values, &b.values, &DtwConfig::banded(1)).unwrap_err();
    println!("band   1: {err}\n");

    // Full 5-fold cross-validation of 1-NN DTW.
    let cv = knn_cross_validate(&real, 1, &DtwConfig::unconstrained(), 1)?;
    println!("{}", render_cv_text(&cv));
    Ok(())
}
