//! The batched activation tensor.

use crate::dataio::LabeledSequence;
use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::signalgen::NUM_CHANNELS;

/// A `[batch x channels x time]` activation tensor.
///
/// Storage is channel-major (`[c][b][t]`), which keeps each channel's
/// `batch*time` slab contiguous: convolutions write GEMM output rows
/// straight into it, channel concatenation is an append, and per-channel
/// batch-norm statistics reduce over one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTensor<S> {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    data: Vec<S>,
}

impl<S: Scalar> BatchTensor<S> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> BatchTensor<S> {
        BatchTensor { batch, channels, len, data: vec![S::zero(); batch * channels * len] }
    }

    /// Stacks equal-length sequences into a batch tensor.
    pub fn from_sequences(sequences: &[&LabeledSequence]) -> Result<BatchTensor<S>> {
        let Some(first) = sequences.first() else {
            return Err(Error::Validation("cannot batch zero sequences".into()));
        };
        let len = first.len();
        let mut out = BatchTensor::zeros(sequences.len(), NUM_CHANNELS, len);
        for (b, seq) in sequences.iter().enumerate() {
            if seq.len() != len {
                return Err(Error::Validation(format!(
                    "cannot batch sequences of different lengths ({} vs {len}); \
                     normalize lengths first",
                    seq.len()
                )));
            }
            for (t, row) in seq.values.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    *out.at_mut(b, c, t) = S::from_f64(v as f64);
                }
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> S {
        debug_assert!(b < self.batch && c < self.channels && t < self.len);
        self.data[(c * self.batch + b) * self.len + t]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, t: usize) -> &mut S {
        debug_assert!(b < self.batch && c < self.channels && t < self.len);
        &mut self.data[(c * self.batch + b) * self.len + t]
    }

    /// The contiguous `[batch*len]` slab of one channel.
    #[inline]
    pub fn channel(&self, c: usize) -> &[S] {
        let stride = self.batch * self.len;
        &self.data[c * stride..(c + 1) * stride]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [S] {
        let stride = self.batch * self.len;
        &mut self.data[c * stride..(c + 1) * stride]
    }

    /// Full backing slice in `[c][b][t]` order.
    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Logical shape `(batch, channels, time)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    /// Appends another tensor's channels (same batch and length).
    pub fn concat_channels(&mut self, other: &BatchTensor<S>) -> Result<()> {
        if self.batch != other.batch || self.len != other.len {
            return Err(Error::DimensionMismatch(format!(
                "concat: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        self.data.extend_from_slice(&other.data);
        self.channels += other.channels;
        Ok(())
    }

    /// Copies `count` channels starting at `from` into a new tensor.
    pub fn slice_channels(&self, from: usize, count: usize) -> BatchTensor<S> {
        assert!(from + count <= self.channels);
        let stride = self.batch * self.len;
        BatchTensor {
            batch: self.batch,
            channels: count,
            len: self.len,
            data: self.data[from * stride..(from + count) * stride].to_vec(),
        }
    }

    /// Elementwise add of a same-shape tensor.
    pub fn add_assign(&mut self, other: &BatchTensor<S>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Debug-build hook for the finite-values invariant.
    #[inline]
    pub fn debug_assert_finite(&self, context: &str) {
        if cfg!(debug_assertions) {
            for (i, v) in self.data.iter().enumerate() {
                assert!(
                    v.is_finite(),
                    "non-finite value {v} at flat index {i} after {context}"
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::testutil::test_sequence;
    use crate::signalgen::EmotionLabel;

    #[test]
    fn from_sequences_round_trips_values() {
        let a = test_sequence("a", EmotionLabel::Anger, 7);
        let b = test_sequence("b", EmotionLabel::Disgust, 7);
        let x: BatchTensor<f32> = BatchTensor::from_sequences(&[&a, &b]).unwrap();
        assert_eq!(x.shape(), (2, NUM_CHANNELS, 7));
        for t in 0..7 {
            for c in 0..NUM_CHANNELS {
                assert_eq!(x.at(0, c, t), a.values[t][c]);
                assert_eq!(x.at(1, c, t), b.values[t][c]);
            }
        }
    }

    #[test]
    fn mixed_lengths_rejected() {
        let a = test_sequence("a", EmotionLabel::Anger, 7);
        let b = test_sequence("b", EmotionLabel::Disgust, 9);
        assert!(BatchTensor::<f32>::from_sequences(&[&a, &b]).is_err());
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = test_sequence("a", EmotionLabel::Anger, 5);
        let mut x: BatchTensor<f64> = BatchTensor::from_sequences(&[&a]).unwrap();
        let y = x.clone();
        x.concat_channels(&y).unwrap();
        assert_eq!(x.channels, 2 * NUM_CHANNELS);
        assert_eq!(x.slice_channels(NUM_CHANNELS, NUM_CHANNELS), y);
        assert_eq!(x.slice_channels(0, NUM_CHANNELS), y);
    }

    #[test]
    fn channel_slab_is_contiguous_batch_major() {
        let mut x: BatchTensor<f32> = BatchTensor::zeros(2, 3, 4);
        *x.at_mut(1, 2, 3) = 7.0;
        let slab = x.channel(2);
        assert_eq!(slab.len(), 8);
        assert_eq!(slab[4 + 3], 7.0);
    }
}
