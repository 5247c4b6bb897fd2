//! Simulator for heterogeneous federated stochastic approximation under
//! Markovian sampling.
//!
//! A fleet of agents, each owning a noisy fixed-point operator driven by an
//! ergodic observation process, cooperates to find the root of the averaged
//! operator. The crate provides:
//!
//! - [`algorithms`]: the drift-corrected federated scheme, the uncorrected
//!   local baseline, and a single-agent reference iteration;
//! - [`operators`]: three problem families (quadratic cost with AR(1)
//!   noise, TD(0) policy evaluation on Markov reward processes, finite sums
//!   sampled by an index chain) plus seeded generators with a
//!   heterogeneity knob;
//! - [`markov`]: finite-chain validation, stationary distributions, mixing
//!   times, Gauss-Markov noise, and reproducible random streams;
//! - [`analysis`]: the closed-form bias limit of the local baseline, error
//!   floors, speedup slopes, and exact-expectation oracles;
//! - [`harness`]: config-driven CLI runs with CSV traces, summaries, and
//!   SVG plots.
//!
//! All randomness flows through keyed counter streams, so every result is
//! bitwise reproducible across runs, platforms, and worker counts.

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod markov;
pub mod numerics;
pub mod operators;

pub use error::{Error, Result};
