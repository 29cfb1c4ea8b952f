//! Software model of a coherent Ising machine driven by chaotic amplitude
//! control with momentum (CACm), together with the tooling needed to tune it.
//!
//! The crate is split along the pipeline:
//!
//! - [`ising`]: instances, energies, Wishart planted instance generation and a
//!   brute-force ground-state oracle.
//! - [`cacm`]: the CACm dynamics, multi-run success probability and the
//!   time-to-solution (TTS) metric.
//! - [`sampler`]: five ask/tell search algorithms over box-bounded spaces and
//!   the per-parameter portfolio assignment.
//! - [`tuner`]: joint search, sequential per-parameter search (method A) and
//!   sensitivity-ordered sequential search (method B).
//! - [`study`]: JSON-lines persistence of tuning studies.
//! - [`bench`]: the benchmark matrix and its CSV tables.

pub mod bench;
pub mod cacm;
mod error;
pub mod ising;
pub mod jsonfmt;
pub mod sampler;
pub mod seed;
pub mod study;
pub mod tuner;

pub use error::{Error, Result};
