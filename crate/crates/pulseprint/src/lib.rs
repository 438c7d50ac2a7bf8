//! Biometric verification from photoplethysmogram (PPG) signals.
//!
//! `pulseprint` implements a complete verification pipeline for pulse
//! waveforms:
//!
//! - [`preprocess`] — band-pass filtering, systolic peak detection, false-peak
//!   removal, and peak-centered segmentation with pair averaging.
//! - [`features`] — continuous wavelet transform with the analytic Morse
//!   wavelet, scale selection, and fixed-length feature vectors.
//! - [`subspace`] — discriminative and unsupervised projections: LDA,
//!   direct LDA for the more-features-than-samples regime, PCA, and
//!   Gaussian-kernel KPCA/KDDA.
//! - [`matching`] — Pearson-distance template matching and threshold
//!   decisions.
//! - [`baselines`] — comparator pipelines: autocorrelation/LDA on blind
//!   windows and open-set matching without dimensionality reduction.
//! - [`eval`] — FAR/FRR/ROC/EER metrics and single-session, cross-partition,
//!   and cross-emotion evaluation protocols with reproducible randomness.
//! - [`synthgen`] — a synthetic PPG cohort generator with per-subject
//!   morphology and controllable state perturbations, so every stage can be
//!   verified without access to restricted datasets.
//! - [`io`] / [`cli`] — dataset manifests, model persistence, report CSVs,
//!   and the `pulseprint` command-line tool.
//!
//! The `examples/` directory contains one runnable example per capability;
//! start with `cargo run --example enroll_verify`.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod preprocess;
pub mod recording;
pub mod subspace;
pub mod synthgen;

pub use config::{Method, NTest, RunConfig};
pub use error::{Error, Result};
pub use recording::{Dataset, RawRecording, State};
