//! From-scratch differentiable kernels, the InceptionTime architecture,
//! Adam optimization, freeze masks, and gradient verification.
//!
//! Everything is generic over a [`Scalar`] element type: `f32` is the fast
//! training path (matrix multiplies dispatch to an SIMD GEMM), while `f64`
//! exists so finite-difference gradient verification can run the entire
//! network at a precision where a 1e-4 relative tolerance is meaningful.
//! Reductions that feed statistics (batch-norm moments, loss averaging)
//! accumulate in f64 on both paths.

mod adam;
mod checkpoint;
mod gradcheck;
mod inception;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointMeta, TensorEntry, CHECKPOINT_SCHEMA_VERSION,
};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use inception::{InceptionBlock, InceptionTime, InceptionTimeConfig};
pub use layers::{
    gap_backward, gap_forward, maxpool3_backward, maxpool3_forward, relu_backward, relu_forward,
    softmax_ce_backward, softmax_ce_forward, BatchNorm1d, Conv1d, Linear, MaxPoolSaved,
};
pub use tensor::BatchTensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point element type for tensors and parameters.
///
/// Implementations must provide a row-major GEMM; `f32`/`f64` dispatch to
/// `matrixmultiply::sgemm`/`dgemm`.
pub trait Scalar:
    num_traits::Float + Default + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * op_a(a) * op_b(b) + beta * c` for row-major matrices:
    /// `a` is `[m x k]` (or `[k x m]` stored row-major when `trans_a`),
    /// `b` is `[k x n]` (or `[n x k]` when `trans_b`), `c` is `[m x n]`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm: a has wrong length");
                assert_eq!(b.len(), k * n, "gemm: b has wrong length");
                assert_eq!(c.len(), m * n, "gemm: c has wrong length");
                let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
                // Safety: lengths are checked above and the strides address
                // exactly those buffers.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// How a forward pass treats batch-norm statistics and saved context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Batch statistics, running-stat updates, context saved for backward.
    Train,
    /// Batch statistics but no state mutation: the pure function that
    /// finite differences probe during gradient verification.
    TrainFrozenStats,
    /// Running statistics, no saving — inference.
    Eval,
}

impl ForwardMode {
    pub(crate) fn use_batch_stats(self) -> bool {
        !matches!(self, ForwardMode::Eval)
    }

    pub(crate) fn update_stats(self) -> bool {
        matches!(self, ForwardMode::Train)
    }

    pub(crate) fn save_ctx(self) -> bool {
        matches!(self, ForwardMode::Train)
    }
}

/// Mutable view of one parameter tensor during traversal.
pub struct ParamRef<'a, S> {
    /// Stable, documented tensor name (also the checkpoint order key).
    pub name: String,
    /// Whether the owning block is frozen (optimizers must skip it).
    pub frozen: bool,
    pub data: &'a mut [S],
    pub grad: &'a mut [S],
}

/// Gradient-descent phase hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Reference-protocol defaults: lr 1e-4, batch 8.
    pub fn new(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig { learning_rate: 1e-4, epochs, batch_size: 8, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be at least 1".into()));
        }
        Ok(())
    }
}
