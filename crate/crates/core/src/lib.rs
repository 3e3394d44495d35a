//! Normalize noisy social-media text, train small neural classifiers on it,
//! stack them behind a logistic meta-classifier, and score the result with
//! macro precision/recall/F1 — all over plain TSV files.
//!
//! The numeric substrate is a reverse-mode autodiff engine over dense f64
//! tensors ([`autograd`]); layers and losses live in [`nn`]; the three
//! architectures (CNN, LSTM, GRU + additive attention) in [`models`]; the
//! stacking logic in [`ensemble`]. Text handling is split between
//! [`textprep`] (the normalization pipeline) and [`spellcheck`]
//! (edit-distance-2 candidate correction ranked by word frequency).

pub mod autograd;
pub mod config;
pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod spellcheck;
pub mod textprep;

pub use error::{Error, Result};
