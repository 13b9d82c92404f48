//! Joint CTC and expected-center-loss training.
//!
//! The crate provides the alignment DP ([`ctc`]), the framewise and temporal
//! fusion losses with their center bank ([`losses`]), a small trainable
//! network with hand-written backpropagation ([`model`]), a seeded synthetic
//! sequence generator ([`synth`]), exhaustive reference implementations
//! ([`oracle`]) driven by the [`check`] suites, evaluation metrics
//! ([`metrics`]), and the [`config`] and [`checkpoint`] file formats used by
//! the `tmf` command-line tool.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod ctc;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod posterior;
pub mod synth;
