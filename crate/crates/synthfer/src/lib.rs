//! Sim2Real pipeline for dynamic facial-expression recognition.
//!
//! The crate synthesizes FACS action-unit (AU) time series from a suite of
//! parameterized virtual identities, renders them across viewing angles into
//! labeled multivariate sequences, and trains dynamic expression classifiers
//! (confusion / anger / disgust) on the result:
//!
//! - [`signalgen`] — AU channels, social-signal animations, virtual identity
//!   suites, viewing-angle grid, and the renderers that produce the synthetic
//!   and surrogate-real datasets.
//! - [`dataio`] — the dataset container, on-disk format, length
//!   normalization, train-time augmentation, fold assignment, and the
//!   mixed-ratio epoch sampler.
//! - [`dtwknn`] — dynamic-time-warping distance and the KNN baseline.
//! - [`nn`] — from-scratch differentiable kernels (1-D convolution, batch
//!   norm, pooling, linear, softmax cross-entropy), the InceptionTime
//!   architecture, Adam, block freezing, and gradient verification.
//! - [`pipeline`] — the three training strategies, 5-fold cross-validation,
//!   metrics, and fairness reporting.
//!
//! Every generator and trainer takes an explicit seed; for a fixed seed and
//! single-job execution all outputs are bit-reproducible on one machine.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `synthfer` binary for the `generate` / `train` / `eval` /
//! `report` / `gradcheck` subcommands.

pub mod dataio;
pub mod dtwknn;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod runs;
pub mod signalgen;

pub use error::{Error, Result};
