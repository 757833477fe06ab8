//! The InceptionTime classifier: stacked inception blocks with periodic
//! residual shortcuts, global average pooling, and a linear softmax head.
//!
//! Wiring of one block (input `x`, channels `C_in`):
//!
//! ```text
//!            ┌─ bottleneck 1x1 ─┬─ conv k=40 ─┐
//!   x ───────┤                  ├─ conv k=20 ─┼─ concat ─ BN ─ ReLU ─→ out
//!            │                  └─ conv k=10 ─┤
//!            └─ maxpool3 ─ conv 1x1 ──────────┘
//! ```
//!
//! All convolutions are bias-free (the batch norm absorbs any offset). At
//! every `residual_every`-th block the running residual input is projected
//! through a 1x1 conv + BN shortcut, added to the block output, and passed
//! through a second ReLU; the sum becomes the new residual input. The
//! shortcut parameters belong to the block they feed into, so freezing a
//! prefix of blocks freezes exactly the shortcuts inside that prefix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    gap_backward, gap_forward, maxpool3_backward, maxpool3_forward, relu_backward, relu_forward,
    BatchNorm1d, Conv1d, Linear, MaxPoolSaved,
};
use crate::nn::{BatchTensor, ForwardMode, ParamRef, Scalar};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionTimeConfig {
    pub input_channels: usize,
    pub classes: usize,
    /// Number of inception blocks.
    pub depth: usize,
    /// Channels of the 1x1 bottleneck feeding the temporal branches.
    pub bottleneck_channels: usize,
    /// Output channels of each of the four branches.
    pub branch_filters: usize,
    /// Kernel widths of the three temporal branches.
    pub kernels: [usize; 3],
    /// A residual shortcut lands on every `residual_every`-th block.
    pub residual_every: usize,
}

impl Default for InceptionTimeConfig {
    /// The reference architecture: depth 6, bottleneck 32, four 32-filter
    /// branches (128 channels per block), kernels {40, 20, 10}, residual
    /// every 3 blocks, 14 input channels, 3 classes.
    fn default() -> InceptionTimeConfig {
        InceptionTimeConfig {
            input_channels: crate::signalgen::NUM_CHANNELS,
            classes: crate::signalgen::NUM_CLASSES,
            depth: 6,
            bottleneck_channels: 32,
            branch_filters: 32,
            kernels: [40, 20, 10],
            residual_every: 3,
        }
    }
}

impl InceptionTimeConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("input_channels", self.input_channels),
            ("classes", self.classes),
            ("depth", self.depth),
            ("bottleneck_channels", self.bottleneck_channels),
            ("branch_filters", self.branch_filters),
            ("residual_every", self.residual_every),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{what} must be at least 1")));
            }
        }
        if self.kernels.contains(&0) {
            return Err(Error::Validation("kernel widths must be at least 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Validation("need at least 2 classes".into()));
        }
        Ok(())
    }

    /// Channels produced by every block: four concatenated branches.
    pub fn block_channels(&self) -> usize {
        4 * self.branch_filters
    }

    fn has_shortcut(&self, block: usize) -> bool {
        block % self.residual_every == self.residual_every - 1
    }

    /// Input channels of block `d`.
    fn in_channels(&self, block: usize) -> usize {
        if block == 0 {
            self.input_channels
        } else {
            self.block_channels()
        }
    }

    /// Channels of the residual input consumed by the shortcut at `block`:
    /// the model input for the first segment, a block output afterwards.
    fn shortcut_in_channels(&self, block: usize) -> usize {
        if block + 1 == self.residual_every {
            self.input_channels
        } else {
            self.block_channels()
        }
    }
}

/// One inception block (plus its residual shortcut, if it has one).
#[derive(Debug, Clone)]
pub struct InceptionBlock<S> {
    /// 1x1 channel-reduction conv; omitted for single-channel inputs.
    pub bottleneck: Option<Conv1d<S>>,
    /// The three temporal convolution branches.
    pub branches: [Conv1d<S>; 3],
    /// 1x1 conv after the max-pool branch (which reads the block input).
    pub pool_conv: Conv1d<S>,
    /// Batch norm over the concatenated branches.
    pub bn: BatchNorm1d<S>,
    /// Residual projection at shortcut positions.
    pub shortcut: Option<(Conv1d<S>, BatchNorm1d<S>)>,
    /// Frozen blocks run BN in eval mode and are skipped by backward and
    /// the optimizer.
    pub frozen: bool,
    saved: Option<BlockSaved<S>>,
}

#[derive(Debug, Clone)]
struct BlockSaved<S> {
    pool: MaxPoolSaved,
    /// Post-ReLU block output (pre-residual), for the first ReLU backward.
    act: BatchTensor<S>,
    /// Post-residual ReLU output, for the second ReLU backward.
    residual_out: Option<BatchTensor<S>>,
}

impl<S: Scalar> InceptionBlock<S> {
    fn new(cfg: &InceptionTimeConfig, block: usize) -> InceptionBlock<S> {
        let in_ch = cfg.in_channels(block);
        let filters = cfg.branch_filters;
        let bottleneck =
            (in_ch > 1).then(|| Conv1d::new(in_ch, cfg.bottleneck_channels, 1, false));
        let branch_in = if bottleneck.is_some() { cfg.bottleneck_channels } else { in_ch };
        InceptionBlock {
            bottleneck,
            branches: cfg.kernels.map(|k| Conv1d::new(branch_in, filters, k, false)),
            pool_conv: Conv1d::new(in_ch, filters, 1, false),
            bn: BatchNorm1d::new(cfg.block_channels()),
            shortcut: cfg.has_shortcut(block).then(|| {
                (
                    Conv1d::new(cfg.shortcut_in_channels(block), cfg.block_channels(), 1, false),
                    BatchNorm1d::new(cfg.block_channels()),
                )
            }),
            frozen: false,
            saved: None,
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        if let Some(b) = &mut self.bottleneck {
            b.init_he_uniform(rng);
        }
        for b in &mut self.branches {
            b.init_he_uniform(rng);
        }
        self.pool_conv.init_he_uniform(rng);
        if let Some((sc, _)) = &mut self.shortcut {
            sc.init_he_uniform(rng);
        }
    }

    fn zero_grad(&mut self) {
        if let Some(b) = &mut self.bottleneck {
            b.zero_grad();
        }
        for b in &mut self.branches {
            b.zero_grad();
        }
        self.pool_conv.zero_grad();
        self.bn.zero_grad();
        if let Some((sc, sc_bn)) = &mut self.shortcut {
            sc.zero_grad();
            sc_bn.zero_grad();
        }
    }

    /// Forward through the block. `res_input` must be provided exactly when
    /// the block has a shortcut.
    fn forward(
        &mut self,
        x: &BatchTensor<S>,
        res_input: Option<&BatchTensor<S>>,
        mode: ForwardMode,
    ) -> Result<BatchTensor<S>> {
        debug_assert_eq!(self.shortcut.is_some(), res_input.is_some());
        // Frozen blocks are inference-only feature extractors: eval-mode
        // statistics, nothing saved, nothing to backpropagate.
        let save = mode.save_ctx() && !self.frozen;
        let batch_stats = mode.use_batch_stats() && !self.frozen;
        let update = mode.update_stats() && !self.frozen;

        let reduced = match &mut self.bottleneck {
            Some(b) => b.forward(x, save)?,
            None => x.clone(),
        };
        let mut cat = self.branches[0].forward(&reduced, save)?;
        cat.concat_channels(&self.branches[1].forward(&reduced, save)?)?;
        cat.concat_channels(&self.branches[2].forward(&reduced, save)?)?;
        let (pooled, pool_saved) = maxpool3_forward(x);
        cat.concat_channels(&self.pool_conv.forward(&pooled, save)?)?;

        let act = relu_forward(&self.bn.forward(&cat, batch_stats, update, save)?);

        let (out, residual_out) = match (&mut self.shortcut, res_input) {
            (Some((sc_conv, sc_bn)), Some(res)) => {
                let projected =
                    sc_bn.forward(&sc_conv.forward(res, save)?, batch_stats, update, save)?;
                let mut sum = act.clone();
                sum.add_assign(&projected)?;
                let out = relu_forward(&sum);
                (out.clone(), Some(out))
            }
            _ => (act.clone(), None),
        };
        self.saved = save.then_some(BlockSaved { pool: pool_saved, act, residual_out });
        Ok(out)
    }

    /// Backward through the block. Returns the gradient with respect to the
    /// block input, plus the gradient with respect to the residual input
    /// when the block has a shortcut.
    fn backward(
        &mut self,
        grad_out: &BatchTensor<S>,
    ) -> Result<(BatchTensor<S>, Option<BatchTensor<S>>)> {
        let Some(saved) = self.saved.take() else {
            return Err(Error::Contract("block backward without saved forward context".into()));
        };

        // Undo the residual merge: the addition routes the same gradient to
        // both the block path and the shortcut path.
        let (grad_act_out, grad_res) = match (&mut self.shortcut, &saved.residual_out) {
            (Some((sc_conv, sc_bn)), Some(res_out)) => {
                let g_sum = relu_backward(res_out, grad_out)?;
                let g_res = sc_conv.backward(&sc_bn.backward(&g_sum)?)?;
                (g_sum, Some(g_res))
            }
            _ => (grad_out.clone(), None),
        };

        let g_cat = self.bn.backward(&relu_backward(&saved.act, &grad_act_out)?)?;
        let f = self.branches[0].out_channels;

        // Temporal branches all feed from the bottleneck output.
        let mut g_reduced = self.branches[0].backward(&g_cat.slice_channels(0, f))?;
        g_reduced.add_assign(&self.branches[1].backward(&g_cat.slice_channels(f, f))?)?;
        g_reduced.add_assign(&self.branches[2].backward(&g_cat.slice_channels(2 * f, f))?)?;
        let mut grad_x = match &mut self.bottleneck {
            Some(b) => b.backward(&g_reduced)?,
            None => g_reduced,
        };

        // Pool branch feeds from the raw block input.
        let g_pooled = self.pool_conv.backward(&g_cat.slice_channels(3 * f, f))?;
        grad_x.add_assign(&maxpool3_backward(&saved.pool, &g_pooled)?)?;

        Ok((grad_x, grad_res))
    }

    fn param_count(&self) -> usize {
        self.bottleneck.as_ref().map_or(0, Conv1d::param_count)
            + self.branches.iter().map(Conv1d::param_count).sum::<usize>()
            + self.pool_conv.param_count()
            + self.bn.param_count()
            + self
                .shortcut
                .as_ref()
                .map_or(0, |(c, b)| c.param_count() + b.param_count())
    }
}

/// The full classifier.
#[derive(Debug, Clone)]
pub struct InceptionTime<S> {
    pub cfg: InceptionTimeConfig,
    pub blocks: Vec<InceptionBlock<S>>,
    pub head: Linear<S>,
    /// Seed the parameters were initialized from (recorded in checkpoints).
    pub init_seed: u64,
    /// Time length of the pre-GAP activation, for the pool backward.
    saved_len: Option<usize>,
}

impl<S: Scalar> InceptionTime<S> {
    /// Builds and initializes a model. All weights are He-uniform
    /// (`U(±sqrt(6/fan_in))`) drawn from a ChaCha8 stream seeded with
    /// `seed`, in block order; biases start at zero, batch norms at
    /// gamma 1 / beta 0 with running stats (0, 1).
    pub fn new(cfg: InceptionTimeConfig, seed: u64) -> Result<InceptionTime<S>> {
        cfg.validate()?;
        let mut blocks: Vec<InceptionBlock<S>> =
            (0..cfg.depth).map(|d| InceptionBlock::new(&cfg, d)).collect();
        let mut head = Linear::new(cfg.block_channels(), cfg.classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut blocks {
            b.init(&mut rng);
        }
        head.init_he_uniform(&mut rng);
        Ok(InceptionTime { cfg, blocks, head, init_seed: seed, saved_len: None })
    }

    /// Forward pass producing `[B x classes x 1]` logits.
    pub fn forward(&mut self, x: &BatchTensor<S>, mode: ForwardMode) -> Result<BatchTensor<S>> {
        if x.channels != self.cfg.input_channels || x.batch == 0 || x.len == 0 {
            return Err(Error::Validation(format!(
                "model expects [B x {} x T] with B,T >= 1, got {:?}",
                self.cfg.input_channels,
                x.shape()
            )));
        }
        let mut cur = x.clone();
        let mut res_input = x.clone();
        for d in 0..self.cfg.depth {
            let has_sc = self.blocks[d].shortcut.is_some();
            let out = self.blocks[d].forward(&cur, has_sc.then_some(&res_input), mode)?;
            if has_sc {
                res_input = out.clone();
            }
            cur = out;
        }
        cur.debug_assert_finite("inception trunk");
        self.saved_len = mode.save_ctx().then_some(cur.len);
        self.head.forward(&gap_forward(&cur), mode.save_ctx())
    }

    /// Backward pass from logit gradients. Stops above the frozen prefix:
    /// parameter gradients accumulate only in unfrozen blocks and the head.
    pub fn backward(&mut self, grad_logits: &BatchTensor<S>) -> Result<()> {
        let len = self
            .saved_len
            .take()
            .ok_or_else(|| Error::Contract("model backward without saved forward context".into()))?;
        let g_pooled = self.head.backward(grad_logits)?;
        let mut grad = gap_backward(&g_pooled, len);

        // Shortcut gradients don't target the preceding block: they skip
        // back to the residual segment start. Park them until the main
        // sweep reaches that block's output.
        let mut pending: Vec<Option<BatchTensor<S>>> = (0..self.cfg.depth).map(|_| None).collect();
        let stop = self.blocks.iter().position(|b| !b.frozen).unwrap_or(self.cfg.depth);
        for d in (stop..self.cfg.depth).rev() {
            if let Some(p) = pending[d].take() {
                grad.add_assign(&p)?;
            }
            let (g_in, g_res) = self.blocks[d].backward(&grad)?;
            if let Some(g_res) = g_res {
                // Residual input = output of the block before the segment
                // start (or the model input, whose gradient we discard).
                if d + 1 > self.cfg.residual_every {
                    let target = d - self.cfg.residual_every;
                    match &mut pending[target] {
                        Some(p) => p.add_assign(&g_res)?,
                        slot => *slot = Some(g_res),
                    }
                }
            }
            grad = g_in;
        }
        Ok(())
    }

    /// Inference: class probability rows, batch-major `[b][class]`.
    pub fn predict_proba(&mut self, x: &BatchTensor<S>) -> Result<Vec<f64>> {
        let logits = self.forward(x, ForwardMode::Eval)?;
        let classes = self.cfg.classes;
        let mut probs = vec![0.0f64; x.batch * classes];
        for b in 0..x.batch {
            let row = &mut probs[b * classes..(b + 1) * classes];
            let mut max = f64::NEG_INFINITY;
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = logits.at(b, c, 0).as_f64();
                max = max.max(*slot);
            }
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(probs)
    }

    /// Freezes the first `first_n` blocks (0 unfreezes everything). The
    /// head is never frozen.
    pub fn set_freeze(&mut self, first_n: usize) -> Result<()> {
        if first_n > self.cfg.depth {
            return Err(Error::Validation(format!(
                "cannot freeze {first_n} of {} blocks",
                self.cfg.depth
            )));
        }
        for (d, b) in self.blocks.iter_mut().enumerate() {
            b.frozen = d < first_n;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.zero_grad();
        }
        self.head.zero_grad();
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(InceptionBlock::param_count).sum::<usize>()
            + self.head.param_count()
    }

    /// Visits every parameter tensor in the documented, stable order:
    /// for each block — bottleneck, branch0, branch1, branch2, pool_conv,
    /// bn.gamma, bn.beta, then shortcut conv / bn.gamma / bn.beta if
    /// present — and finally head.weight, head.bias. Optimizer state and
    /// checkpoints both key off this order.
    pub fn for_each_param(&mut self, f: &mut impl FnMut(ParamRef<'_, S>)) {
        for (d, block) in self.blocks.iter_mut().enumerate() {
            let frozen = block.frozen;
            let mut visit_conv = |base: String, c: &mut Conv1d<S>| {
                f(ParamRef {
                    name: format!("{base}.weight"),
                    frozen,
                    data: &mut c.weight,
                    grad: &mut c.grad_weight,
                });
                if let (Some(b), Some(g)) = (&mut c.bias, &mut c.grad_bias) {
                    f(ParamRef {
                        name: format!("{base}.bias"),
                        frozen,
                        data: b.as_mut_slice(),
                        grad: g.as_mut_slice(),
                    });
                }
            };
            if let Some(b) = &mut block.bottleneck {
                visit_conv(format!("block{d}.bottleneck"), b);
            }
            for (i, br) in block.branches.iter_mut().enumerate() {
                visit_conv(format!("block{d}.branch{i}"), br);
            }
            visit_conv(format!("block{d}.pool_conv"), &mut block.pool_conv);
            f(ParamRef {
                name: format!("block{d}.bn.gamma"),
                frozen,
                data: &mut block.bn.gamma,
                grad: &mut block.bn.grad_gamma,
            });
            f(ParamRef {
                name: format!("block{d}.bn.beta"),
                frozen,
                data: &mut block.bn.beta,
                grad: &mut block.bn.grad_beta,
            });
            if let Some((sc, sc_bn)) = &mut block.shortcut {
                f(ParamRef {
                    name: format!("block{d}.shortcut.conv.weight"),
                    frozen,
                    data: &mut sc.weight,
                    grad: &mut sc.grad_weight,
                });
                f(ParamRef {
                    name: format!("block{d}.shortcut.bn.gamma"),
                    frozen,
                    data: &mut sc_bn.gamma,
                    grad: &mut sc_bn.grad_gamma,
                });
                f(ParamRef {
                    name: format!("block{d}.shortcut.bn.beta"),
                    frozen,
                    data: &mut sc_bn.beta,
                    grad: &mut sc_bn.grad_beta,
                });
            }
        }
        f(ParamRef {
            name: "head.weight".into(),
            frozen: false,
            data: &mut self.head.weight,
            grad: &mut self.head.grad_weight,
        });
        f(ParamRef {
            name: "head.bias".into(),
            frozen: false,
            data: &mut self.head.bias,
            grad: &mut self.head.grad_bias,
        });
    }
}
