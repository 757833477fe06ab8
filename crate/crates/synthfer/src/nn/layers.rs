//! Differentiable layer kernels: 1-D convolution (im2col + GEMM), batch
//! norm, ReLU, max-pool, global average pool, linear, and softmax
//! cross-entropy.
//!
//! Layers are stateful: a training-mode forward saves whatever its
//! backward needs, and backward consumes that context (calling it without
//! a prior saving forward is a contract error). Parameter gradients
//! accumulate until [`zero_grad`](Conv1d::zero_grad) is called.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{BatchTensor, Scalar};

/// 1-D convolution, stride 1, zero same-padding (`pad_left = (k-1)/2`),
/// so output length equals input length.
#[derive(Debug, Clone)]
pub struct Conv1d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][k]` row-major.
    pub weight: Vec<S>,
    pub grad_weight: Vec<S>,
    pub bias: Option<Vec<S>>,
    pub grad_bias: Option<Vec<S>>,
    saved: Option<ConvSaved<S>>,
}

#[derive(Debug, Clone)]
struct ConvSaved<S> {
    col: Vec<S>,
    batch: usize,
    len: usize,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, bias: bool) -> Conv1d<S> {
        assert!(kernel >= 1, "kernel must be at least 1");
        let w = in_channels * out_channels * kernel;
        Conv1d {
            in_channels,
            out_channels,
            kernel,
            weight: vec![S::zero(); w],
            grad_weight: vec![S::zero(); w],
            bias: bias.then(|| vec![S::zero(); out_channels]),
            grad_bias: bias.then(|| vec![S::zero(); out_channels]),
            saved: None,
        }
    }

    /// He-uniform initialization: `U(±sqrt(6/fan_in))`, zero bias.
    pub fn init_he_uniform<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        for w in &mut self.weight {
            *w = S::from_f64(rng.random_range(-bound..=bound));
        }
        if let Some(bias) = &mut self.bias {
            bias.fill(S::zero());
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(S::zero());
        if let Some(gb) = &mut self.grad_bias {
            gb.fill(S::zero());
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Lowers `x` into the `[in*k x batch*len]` im2col matrix.
    fn im2col(&self, x: &BatchTensor<S>) -> Vec<S> {
        let (b_n, _, t_n) = x.shape();
        let bt = b_n * t_n;
        let pad = self.pad_left();
        let mut col = vec![S::zero(); self.in_channels * self.kernel * bt];
        for ci in 0..self.in_channels {
            let xc = x.channel(ci);
            for u in 0..self.kernel {
                let row = ci * self.kernel + u;
                // Valid t range keeps t + u - pad inside [0, T).
                let t_lo = pad.saturating_sub(u);
                let t_hi = (t_n + pad).saturating_sub(u).min(t_n);
                if t_lo >= t_hi {
                    continue;
                }
                for b in 0..b_n {
                    let dst = row * bt + b * t_n;
                    let src = b * t_n + t_lo + u - pad;
                    col[dst + t_lo..dst + t_hi]
                        .copy_from_slice(&xc[src..src + (t_hi - t_lo)]);
                }
            }
        }
        col
    }

    pub fn forward(&mut self, x: &BatchTensor<S>, save: bool) -> Result<BatchTensor<S>> {
        if x.channels != self.in_channels {
            return Err(Error::Validation(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        let (b_n, _, t_n) = x.shape();
        let bt = b_n * t_n;
        let col = self.im2col(x);
        let mut out = BatchTensor::zeros(b_n, self.out_channels, t_n);
        S::gemm(
            self.out_channels,
            self.in_channels * self.kernel,
            bt,
            S::one(),
            &self.weight,
            false,
            &col,
            false,
            S::zero(),
            out.as_mut_slice(),
        );
        if let Some(bias) = &self.bias {
            for (co, &b) in bias.iter().enumerate() {
                for v in out.channel_mut(co) {
                    *v = *v + b;
                }
            }
        }
        self.saved = save.then_some(ConvSaved { col, batch: b_n, len: t_n });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &BatchTensor<S>) -> Result<BatchTensor<S>> {
        let Some(ConvSaved { col, batch: b_n, len: t_n }) = self.saved.take() else {
            return Err(Error::Contract("conv backward without saved forward context".into()));
        };
        if grad_out.shape() != (b_n, self.out_channels, t_n) {
            return Err(Error::Contract(format!(
                "conv backward shape {:?} does not match saved forward ({}, {}, {})",
                grad_out.shape(),
                b_n,
                self.out_channels,
                t_n
            )));
        }
        let bt = b_n * t_n;
        let rows = self.in_channels * self.kernel;

        // dW += G · colᵀ
        S::gemm(
            self.out_channels,
            bt,
            rows,
            S::one(),
            grad_out.as_slice(),
            false,
            &col,
            true,
            S::one(),
            &mut self.grad_weight,
        );
        if let Some(gb) = &mut self.grad_bias {
            for (co, g) in gb.iter_mut().enumerate() {
                let mut sum = 0.0f64;
                for &v in grad_out.channel(co) {
                    sum += v.as_f64();
                }
                *g = *g + S::from_f64(sum);
            }
        }

        // grad_col = Wᵀ · G, then scatter back through the padding.
        let mut grad_col = vec![S::zero(); rows * bt];
        S::gemm(
            rows,
            self.out_channels,
            bt,
            S::one(),
            &self.weight,
            true,
            grad_out.as_slice(),
            false,
            S::zero(),
            &mut grad_col,
        );
        let pad = self.pad_left();
        let mut grad_x = BatchTensor::zeros(b_n, self.in_channels, t_n);
        for ci in 0..self.in_channels {
            let gx = grad_x.channel_mut(ci);
            for u in 0..self.kernel {
                let row = ci * self.kernel + u;
                let t_lo = pad.saturating_sub(u);
                let t_hi = (t_n + pad).saturating_sub(u).min(t_n);
                if t_lo >= t_hi {
                    continue;
                }
                for b in 0..b_n {
                    let src = row * bt + b * t_n;
                    let dst = b * t_n + t_lo + u - pad;
                    for i in 0..t_hi - t_lo {
                        gx[dst + i] = gx[dst + i] + grad_col[src + t_lo + i];
                    }
                }
            }
        }
        Ok(grad_x)
    }
}

/// Per-channel batch normalization over the `(batch, time)` axes.
///
/// Training mode normalizes by batch statistics (accumulated in f64) and
/// updates running stats with momentum 0.1 (running variance uses the
/// unbiased estimate); eval mode normalizes by the running stats, which
/// start at mean 0 / variance 1.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<S> {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub grad_gamma: Vec<S>,
    pub grad_beta: Vec<S>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    saved: Option<BnSaved<S>>,
}

#[derive(Debug, Clone)]
struct BnSaved<S> {
    x_hat: BatchTensor<S>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl<S: Scalar> BatchNorm1d<S> {
    pub fn new(channels: usize) -> BatchNorm1d<S> {
        BatchNorm1d {
            channels,
            momentum: 0.1,
            eps: 1e-5,
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            grad_gamma: vec![S::zero(); channels],
            grad_beta: vec![S::zero(); channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            saved: None,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(S::zero());
        self.grad_beta.fill(S::zero());
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward(
        &mut self,
        x: &BatchTensor<S>,
        use_batch_stats: bool,
        update_stats: bool,
        save: bool,
    ) -> Result<BatchTensor<S>> {
        if x.channels != self.channels {
            return Err(Error::Validation(format!(
                "batch norm expects {} channels, got {}",
                self.channels, x.channels
            )));
        }
        let n = (x.batch * x.len) as f64;
        let mut out = x.clone();
        let mut x_hat = save.then(|| x.clone());
        let mut inv_stds = vec![0.0f64; self.channels];
        for (c, inv_std_out) in inv_stds.iter_mut().enumerate() {
            let (mean, inv_std) = if use_batch_stats {
                let slab = x.channel(c);
                let mean = slab.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                let var = slab.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
                if update_stats {
                    let m = self.momentum;
                    let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                    self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean;
                    self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased;
                }
                (mean, 1.0 / (var + self.eps).sqrt())
            } else {
                (self.running_mean[c], 1.0 / (self.running_var[c] + self.eps).sqrt())
            };
            *inv_std_out = inv_std;
            let gamma = self.gamma[c].as_f64();
            let beta = self.beta[c].as_f64();
            let out_slab = out.channel_mut(c);
            for v in out_slab.iter_mut() {
                let xh = (v.as_f64() - mean) * inv_std;
                *v = S::from_f64(gamma * xh + beta);
            }
            if let Some(xh_t) = &mut x_hat {
                for v in xh_t.channel_mut(c) {
                    *v = S::from_f64((v.as_f64() - mean) * inv_std);
                }
            }
        }
        self.saved = x_hat.map(|x_hat| BnSaved {
            x_hat,
            inv_std: inv_stds,
            batch_stats: use_batch_stats,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &BatchTensor<S>) -> Result<BatchTensor<S>> {
        let Some(saved) = self.saved.take() else {
            return Err(Error::Contract("batch norm backward without saved context".into()));
        };
        if grad_out.shape() != saved.x_hat.shape() {
            return Err(Error::Contract(format!(
                "batch norm backward shape {:?} does not match saved {:?}",
                grad_out.shape(),
                saved.x_hat.shape()
            )));
        }
        let n = (grad_out.batch * grad_out.len) as f64;
        let mut grad_x = grad_out.clone();
        for c in 0..self.channels {
            let gy = grad_out.channel(c);
            let xh = saved.x_hat.channel(c);
            let mut sum_gy = 0.0f64;
            let mut sum_gy_xh = 0.0f64;
            for (g, x) in gy.iter().zip(xh) {
                sum_gy += g.as_f64();
                sum_gy_xh += g.as_f64() * x.as_f64();
            }
            self.grad_gamma[c] = self.grad_gamma[c] + S::from_f64(sum_gy_xh);
            self.grad_beta[c] = self.grad_beta[c] + S::from_f64(sum_gy);

            let scale = self.gamma[c].as_f64() * saved.inv_std[c];
            let gx = grad_x.channel_mut(c);
            if saved.batch_stats {
                for (g, (gy_v, xh_v)) in gx.iter_mut().zip(gy.iter().zip(xh)) {
                    let v = gy_v.as_f64() - sum_gy / n - xh_v.as_f64() * sum_gy_xh / n;
                    *g = S::from_f64(scale * v);
                }
            } else {
                for (g, gy_v) in gx.iter_mut().zip(gy) {
                    *g = S::from_f64(scale * gy_v.as_f64());
                }
            }
        }
        Ok(grad_x)
    }
}

/// Elementwise rectifier.
pub fn relu_forward<S: Scalar>(x: &BatchTensor<S>) -> BatchTensor<S> {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
    out
}

/// Backward through ReLU given the forward *output* (positive where the
/// input was positive).
pub fn relu_backward<S: Scalar>(
    saved_out: &BatchTensor<S>,
    grad_out: &BatchTensor<S>,
) -> Result<BatchTensor<S>> {
    if saved_out.shape() != grad_out.shape() {
        return Err(Error::Contract(format!(
            "relu backward shape {:?} vs saved {:?}",
            grad_out.shape(),
            saved_out.shape()
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &y) in grad.as_mut_slice().iter_mut().zip(saved_out.as_slice()) {
        if y <= S::zero() {
            *g = S::zero();
        }
    }
    Ok(grad)
}

/// Argmax record for max-pool backward.
#[derive(Debug, Clone)]
pub struct MaxPoolSaved {
    shape: (usize, usize, usize),
    /// Winning source time index per output element, in `[c][b][t]` order.
    argmax_t: Vec<u32>,
}

/// Window-3, stride-1, same-padding max pool along time (out-of-range
/// positions never win).
pub fn maxpool3_forward<S: Scalar>(x: &BatchTensor<S>) -> (BatchTensor<S>, MaxPoolSaved) {
    let (b_n, c_n, t_n) = x.shape();
    let mut out = x.clone();
    let mut argmax = vec![0u32; b_n * c_n * t_n];
    for c in 0..c_n {
        let xc = x.channel(c);
        let oc = out.channel_mut(c);
        for b in 0..b_n {
            let base = b * t_n;
            for t in 0..t_n {
                let mut best_t = t;
                let mut best = xc[base + t];
                if t > 0 && xc[base + t - 1] > best {
                    best = xc[base + t - 1];
                    best_t = t - 1;
                }
                if t + 1 < t_n && xc[base + t + 1] > best {
                    best = xc[base + t + 1];
                    best_t = t + 1;
                }
                oc[base + t] = best;
                argmax[(c * b_n + b) * t_n + t] = best_t as u32;
            }
        }
    }
    (out, MaxPoolSaved { shape: (b_n, c_n, t_n), argmax_t: argmax })
}

/// Scatters gradients back to each window's winning element.
pub fn maxpool3_backward<S: Scalar>(
    saved: &MaxPoolSaved,
    grad_out: &BatchTensor<S>,
) -> Result<BatchTensor<S>> {
    if grad_out.shape() != saved.shape {
        return Err(Error::Contract(format!(
            "maxpool backward shape {:?} vs saved {:?}",
            grad_out.shape(),
            saved.shape
        )));
    }
    let (b_n, c_n, t_n) = saved.shape;
    let mut grad_x = BatchTensor::zeros(b_n, c_n, t_n);
    for c in 0..c_n {
        let go = grad_out.channel(c);
        let gx = grad_x.channel_mut(c);
        for b in 0..b_n {
            let base = b * t_n;
            for t in 0..t_n {
                let src = saved.argmax_t[(c * b_n + b) * t_n + t] as usize;
                gx[base + src] = gx[base + src] + go[base + t];
            }
        }
    }
    Ok(grad_x)
}

/// Global average pool over time: `[B x C x T]` → `[B x C x 1]`.
pub fn gap_forward<S: Scalar>(x: &BatchTensor<S>) -> BatchTensor<S> {
    let (b_n, c_n, t_n) = x.shape();
    let mut out = BatchTensor::zeros(b_n, c_n, 1);
    for c in 0..c_n {
        let xc = x.channel(c);
        let oc = out.channel_mut(c);
        for b in 0..b_n {
            let sum: f64 = xc[b * t_n..(b + 1) * t_n].iter().map(|v| v.as_f64()).sum();
            oc[b] = S::from_f64(sum / t_n as f64);
        }
    }
    out
}

/// Backward of the global average pool for an input of length `len`.
pub fn gap_backward<S: Scalar>(grad_out: &BatchTensor<S>, len: usize) -> BatchTensor<S> {
    let (b_n, c_n, _) = grad_out.shape();
    let mut grad_x = BatchTensor::zeros(b_n, c_n, len);
    let inv = 1.0 / len as f64;
    for c in 0..c_n {
        let go = grad_out.channel(c);
        let gx = grad_x.channel_mut(c);
        for b in 0..b_n {
            let g = S::from_f64(go[b].as_f64() * inv);
            gx[b * len..(b + 1) * len].fill(g);
        }
    }
    grad_x
}

/// Fully connected layer on `[B x F x 1]` tensors.
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]` row-major.
    pub weight: Vec<S>,
    pub grad_weight: Vec<S>,
    pub bias: Vec<S>,
    pub grad_bias: Vec<S>,
    saved: Option<BatchTensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(in_features: usize, out_features: usize) -> Linear<S> {
        Linear {
            in_features,
            out_features,
            weight: vec![S::zero(); in_features * out_features],
            grad_weight: vec![S::zero(); in_features * out_features],
            bias: vec![S::zero(); out_features],
            grad_bias: vec![S::zero(); out_features],
            saved: None,
        }
    }

    pub fn init_he_uniform<R: Rng>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.in_features as f64).sqrt();
        for w in &mut self.weight {
            *w = S::from_f64(rng.random_range(-bound..=bound));
        }
        self.bias.fill(S::zero());
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(S::zero());
        self.grad_bias.fill(S::zero());
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&mut self, x: &BatchTensor<S>, save: bool) -> Result<BatchTensor<S>> {
        if x.channels != self.in_features || x.len != 1 {
            return Err(Error::Validation(format!(
                "linear expects [B x {} x 1], got {:?}",
                self.in_features,
                x.shape()
            )));
        }
        let b_n = x.batch;
        let mut out = BatchTensor::zeros(b_n, self.out_features, 1);
        S::gemm(
            self.out_features,
            self.in_features,
            b_n,
            S::one(),
            &self.weight,
            false,
            x.as_slice(),
            false,
            S::zero(),
            out.as_mut_slice(),
        );
        for (o, &b) in self.bias.iter().enumerate() {
            for v in out.channel_mut(o) {
                *v = *v + b;
            }
        }
        self.saved = save.then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &BatchTensor<S>) -> Result<BatchTensor<S>> {
        let Some(x) = self.saved.take() else {
            return Err(Error::Contract("linear backward without saved context".into()));
        };
        if grad_out.shape() != (x.batch, self.out_features, 1) {
            return Err(Error::Contract(format!(
                "linear backward shape {:?} vs expected ({}, {}, 1)",
                grad_out.shape(),
                x.batch,
                self.out_features
            )));
        }
        let b_n = x.batch;
        // dW += G · xᵀ
        S::gemm(
            self.out_features,
            b_n,
            self.in_features,
            S::one(),
            grad_out.as_slice(),
            false,
            x.as_slice(),
            true,
            S::one(),
            &mut self.grad_weight,
        );
        for (o, g) in self.grad_bias.iter_mut().enumerate() {
            let sum: f64 = grad_out.channel(o).iter().map(|v| v.as_f64()).sum();
            *g = *g + S::from_f64(sum);
        }
        let mut grad_x = BatchTensor::zeros(b_n, self.in_features, 1);
        S::gemm(
            self.in_features,
            self.out_features,
            b_n,
            S::one(),
            &self.weight,
            true,
            grad_out.as_slice(),
            false,
            S::zero(),
            grad_x.as_mut_slice(),
        );
        Ok(grad_x)
    }
}

/// Softmax + categorical cross-entropy on `[B x classes x 1]` logits.
///
/// Returns the mean loss over the batch and the per-item probability
/// rows (batch-major `[b][class]`, f64). Probabilities are computed with
/// the max-subtraction trick and are valid distributions for any finite
/// logits.
pub fn softmax_ce_forward<S: Scalar>(
    logits: &BatchTensor<S>,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let (b_n, c_n, len) = logits.shape();
    if len != 1 || labels.len() != b_n {
        return Err(Error::Validation(format!(
            "softmax expects [B x C x 1] logits and B labels, got {:?} and {}",
            logits.shape(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c_n) {
        return Err(Error::Validation(format!("label {bad} out of range for {c_n} classes")));
    }
    let mut probs = vec![0.0f64; b_n * c_n];
    let mut loss = 0.0f64;
    for b in 0..b_n {
        let row = &mut probs[b * c_n..(b + 1) * c_n];
        let mut max = f64::NEG_INFINITY;
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = logits.at(b, c, 0).as_f64();
            max = max.max(*slot);
        }
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        loss -= row[labels[b]].max(f64::MIN_POSITIVE).ln();
    }
    Ok((loss / b_n as f64, probs))
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(p - onehot) / B`.
pub fn softmax_ce_backward<S: Scalar>(
    probs: &[f64],
    labels: &[usize],
    classes: usize,
) -> BatchTensor<S> {
    let b_n = labels.len();
    assert_eq!(probs.len(), b_n * classes);
    let mut grad = BatchTensor::zeros(b_n, classes, 1);
    let inv = 1.0 / b_n as f64;
    for b in 0..b_n {
        for c in 0..classes {
            let y = if labels[b] == c { 1.0 } else { 0.0 };
            *grad.at_mut(b, c, 0) = S::from_f64((probs[b * classes + c] - y) * inv);
        }
    }
    grad
}
