//! Verifies the hand-written backpropagation against central finite
//! differences on a reduced InceptionTime (depth 2, ~2k parameters).
//!
//! For each of five seeds the check perturbs 200 randomly sampled
//! parameter coordinates, compares the analytic gradient of the softmax
//! cross-entropy loss with `(L(w+h) - L(w-h)) / 2h`, and reports the
//! worst relative disagreement. Batch-norm runs on frozen batch
//! statistics during the numeric passes so both sides differentiate the
//! same pure function.
//!
//! Run with: `cargo run --example gradient_check`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthfer::nn::{grad_check, BatchTensor, InceptionTime, InceptionTimeConfig};
use synthfer::signalgen::{NUM_CHANNELS, NUM_CLASSES};

fn main() -> synthfer::Result<()> {
    let cfg = InceptionTimeConfig {
        input_channels: NUM_CHANNELS,
        classes: NUM_CLASSES,
        depth: 2,
        bottleneck_channels: 4,
        branch_filters: 6,
        kernels: [11, 7, 3],
        residual_every: 2,
    };

    let mut worst_overall = 0.0f64;
    for seed in 0..5 {
        let mut model = InceptionTime::<f64>::new(cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut x = BatchTensor::<f64>::zeros(4, cfg.input_channels, 25);
        for v in x.as_mut_slice() {
            *v = rng.random_range(0.0..1.0);
        }
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..NUM_CLASSES)).collect();

        let report = grad_check(&mut model, &x, &labels, 200, 1e-4, seed)?;
        let (tensor, index, analytic, numeric) =
            report.worst.as_ref().expect("sampled at least one coordinate");
        println!(
            "seed {seed}: {:>3} coords, max rel {:.3e}, max abs {:.3e}, worst {tensor}[{index}] \
             ({analytic:.6e} vs {numeric:.6e}) -> {}",
            report.coords_checked,
            report.max_rel_error,
            report.max_abs_diff,
            if report.passed { "ok" } else { "FAILED" }
        );
        assert!(report.passed, "gradient check failed at seed {seed}");
        worst_overall = worst_overall.max(report.max_rel_error);
    }
    println!(
        "\nall 5 seeds passed; worst relative error {worst_overall:.3e} (model: {} parameters)",
        InceptionTime::<f64>::new(cfg, 0)?.param_count()
    );
    Ok(())
}
