//! Finite-difference verification of the analytic gradients.
//!
//! The scalar under test is the mean softmax cross-entropy of one batch.
//! One training-mode forward/backward produces analytic gradients; each
//! sampled coordinate is then perturbed ±h and re-evaluated with
//! [`ForwardMode::TrainFrozenStats`], which computes the identical
//! batch-statistics loss without mutating running stats or saved context —
//! the pure function that central differences require.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{softmax_ce_backward, softmax_ce_forward};
use crate::nn::{BatchTensor, ForwardMode, InceptionTime, Scalar};

/// Central-difference step. The comparison tolerance of 1e-4 is only
/// meaningful when the model runs in f64: h² truncation error then sits
/// near 1e-10 for O(1) losses while the roundoff floor stays near 1e-11.
/// The step is deliberately smaller than the per-layer oracle step used
/// in linear-layer tests — the full model contains ReLU and max-pool
/// kinks, and a large step occasionally straddles one, invalidating the
/// central-difference estimate even though the analytic gradient is
/// exact on both sides.
pub const FD_STEP: f64 = 1e-5;

/// Differences below this are treated as agreement regardless of relative
/// error: both sides are numerically zero at central-difference accuracy.
const ABS_AGREEMENT: f64 = 1e-7;

/// Outcome of one gradient verification run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Largest absolute `|analytic - numeric|` seen, including the
    /// coordinates whose relative error was floored to zero by the
    /// absolute-agreement threshold — the check's actual resolution.
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// `(tensor name, coordinate, analytic, numeric)` of the worst match.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative disagreement between an analytic and a numeric derivative.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < ABS_AGREEMENT {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

fn loss_of<S: Scalar>(
    model: &mut InceptionTime<S>,
    x: &BatchTensor<S>,
    labels: &[usize],
) -> Result<f64> {
    let logits = model.forward(x, ForwardMode::TrainFrozenStats)?;
    Ok(softmax_ce_forward(&logits, labels)?.0)
}

/// Applies `f` to the `target`-th coordinate of the unfrozen parameter
/// vector, in traversal order.
fn with_unfrozen_coord<S: Scalar>(
    model: &mut InceptionTime<S>,
    target: usize,
    f: &mut impl FnMut(&mut S),
) {
    let mut seen = 0usize;
    model.for_each_param(&mut |p| {
        if p.frozen {
            return;
        }
        if (seen..seen + p.data.len()).contains(&target) {
            f(&mut p.data[target - seen]);
        }
        seen += p.data.len();
    });
}

/// Verifies analytic gradients against central finite differences on
/// `samples` randomly chosen unfrozen coordinates (all of them if the
/// model has fewer). Intended for small models (≤ ~1e4 parameters): each
/// coordinate costs two forward passes.
pub fn grad_check<S: Scalar>(
    model: &mut InceptionTime<S>,
    x: &BatchTensor<S>,
    labels: &[usize],
    samples: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_inner(model, x, labels, samples, tolerance, seed, false)
}

/// `negate_analytic` is the self-test corruption hook: comparing `-g`
/// against the numeric derivative must fail with relative error ≈ 2.
pub(crate) fn grad_check_inner<S: Scalar>(
    model: &mut InceptionTime<S>,
    x: &BatchTensor<S>,
    labels: &[usize],
    samples: usize,
    tolerance: f64,
    seed: u64,
    negate_analytic: bool,
) -> Result<GradCheckReport> {
    if samples == 0 {
        return Err(Error::Validation("gradient check needs at least 1 sample".into()));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::Validation(format!("tolerance {tolerance} must be positive")));
    }

    // Analytic pass.
    model.zero_grad();
    let logits = model.forward(x, ForwardMode::Train)?;
    let (_, probs) = softmax_ce_forward(&logits, labels)?;
    model.backward(&softmax_ce_backward(&probs, labels, model.cfg.classes))?;

    // Snapshot the unfrozen gradient vector with tensor provenance.
    let mut names: Vec<String> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new(); // (tensor, local index base)
    let mut grads: Vec<f64> = Vec::new();
    model.for_each_param(&mut |p| {
        if p.frozen {
            return;
        }
        spans.push((names.len(), grads.len()));
        names.push(p.name.clone());
        grads.extend(p.grad.iter().map(|g| g.as_f64()));
    });
    let total = grads.len();
    if total == 0 {
        return Err(Error::Validation("model has no unfrozen parameters to check".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = samples.min(total);
    let picks = rand::seq::index::sample(&mut rng, total, amount);

    let h = S::from_f64(FD_STEP);
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut worst = None;
    let mut worst_key = (-1.0f64, -1.0f64);
    for flat in picks {
        let sign = if negate_analytic { -1.0 } else { 1.0 };
        let analytic = sign * grads[flat];

        with_unfrozen_coord(model, flat, &mut |w| *w = *w + h);
        let loss_plus = loss_of(model, x, labels)?;
        with_unfrozen_coord(model, flat, &mut |w| *w = *w - (h + h));
        let loss_minus = loss_of(model, x, labels)?;
        with_unfrozen_coord(model, flat, &mut |w| *w = *w + h);

        let numeric = (loss_plus - loss_minus) / (2.0 * FD_STEP);
        let diff = (analytic - numeric).abs();
        let rel = rel_error(analytic, numeric);
        sum_rel += rel;
        max_rel = max_rel.max(rel);
        max_abs = max_abs.max(diff);
        // Worst coordinate: largest relative error, absolute difference
        // as the tie-break so floored-to-zero runs still show their
        // least-agreeing coordinate.
        if (rel, diff) >= worst_key {
            worst_key = (rel, diff);
            let (tensor, base) =
                *spans.iter().take_while(|(_, base)| *base <= flat).last().unwrap();
            worst = Some((names[tensor].clone(), flat - base, analytic, numeric));
        }
    }
    Ok(GradCheckReport {
        coords_checked: amount,
        max_rel_error: max_rel,
        mean_rel_error: sum_rel / amount as f64,
        max_abs_diff: max_abs,
        tolerance,
        passed: max_rel < tolerance,
        worst,
    })
}
