//! Overfits the full-capacity network on ten real sequences.
//!
//! The standard sanity check that the backbone and optimizer can drive
//! training loss essentially to zero when generalization is not asked
//! for: ten surrogate-real sequences, fixed center-window inputs, one
//! batch per epoch, and at most 500 Adam steps. Failure here almost
//! always means a broken gradient path, not a modeling problem.
//!
//! Run with: `cargo run --example memorize_ten`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthfer::dataio::{normalize_length, LengthPolicy};
use synthfer::nn::{
    softmax_ce_backward, softmax_ce_forward, Adam, AdamConfig, BatchTensor, ForwardMode,
    InceptionTime, InceptionTimeConfig,
};
use synthfer::signalgen::{generate_surrogate_real, NoiseConfig, NUM_CLASSES};

const TARGET_LEN: usize = 25;
const MAX_EPOCHS: usize = 500;
const TARGET_CE: f64 = 0.05;

fn main() -> synthfer::Result<()> {
    let real = generate_surrogate_real(5, &NoiseConfig::surrogate_default(), 6)?;

    // Ten sequences, roughly class-balanced, normalized once with the
    // deterministic center window so every epoch sees identical inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let quota = [4usize, 3, 3];
    let mut per_class = [0usize; NUM_CLASSES];
    let mut subset = Vec::new();
    for seq in &real.sequences {
        let class = seq.label.index();
        if per_class[class] < quota[class] {
            per_class[class] += 1;
            subset.push(normalize_length(seq, LengthPolicy::test(TARGET_LEN), &mut rng));
        }
        if subset.len() == 10 {
            break;
        }
    }
    let batch = BatchTensor::<f32>::from_sequences(&subset.iter().collect::<Vec<_>>())?;
    let labels: Vec<usize> = subset.iter().map(|s| s.label.index()).collect();
    println!("memorizing {} sequences, labels {:?}", subset.len(), labels);

    let mut model = InceptionTime::<f32>::new(InceptionTimeConfig::default(), 42)?;
    println!("network parameters: {}", model.param_count());
    // Memorization wants a larger step than the transfer-learning
    // default; the point is capacity, not generalization.
    let mut adam = Adam::new(AdamConfig::new(1e-3))?;

    // Train until the loss target is hit AND the inference-mode forward
    // agrees on every label. The loss target alone usually falls within
    // a handful of epochs, while the batch-norm running statistics need
    // a few more updates before inference mode matches training mode —
    // both milestones are reported.
    let mut loss_epoch = None;
    let mut done = None;
    for epoch in 1..=MAX_EPOCHS {
        model.zero_grad();
        let logits = model.forward(&batch, ForwardMode::Train)?;
        let (loss, probs) = softmax_ce_forward(&logits, &labels)?;
        let grad = softmax_ce_backward::<f32>(&probs, &labels, NUM_CLASSES);
        model.backward(&grad)?;
        adam.step(&mut model)?;
        if epoch % 25 == 0 {
            println!("epoch {epoch:>3}  cross-entropy {loss:.4}");
        }
        if loss >= TARGET_CE {
            continue;
        }
        if loss_epoch.is_none() {
            loss_epoch = Some(epoch);
            println!("epoch {epoch:>3}  cross-entropy {loss:.4}  (loss target reached)");
        }
        if eval_correct(&mut model, &batch, &labels)? == labels.len() {
            done = Some((epoch, loss));
            break;
        }
    }
    let (epoch, loss) = done.expect("ten sequences should be memorized within 500 epochs");
    let loss_epoch = loss_epoch.unwrap();
    println!(
        "\nloss below {TARGET_CE} at epoch {loss_epoch}; inference-mode forward agrees on \
         all {} labels from epoch {epoch} (final cross-entropy {loss:.4})",
        labels.len()
    );
    Ok(())
}

/// Inference-mode labels that match, using the running batch-norm
/// statistics rather than the statistics of this batch.
fn eval_correct(
    model: &mut InceptionTime<f32>,
    batch: &BatchTensor<f32>,
    labels: &[usize],
) -> synthfer::Result<usize> {
    let probs = model.predict_proba(batch)?;
    Ok(labels
        .iter()
        .enumerate()
        .filter(|(i, &label)| {
            let row = &probs[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            let (pred, _) = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |best, (j, &p)| if p > best.1 { (j, p) } else { best });
            pred == label
        })
        .count())
}
