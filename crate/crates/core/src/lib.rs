//! Single-channel multi-talker separation primitives.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! piece of the pipeline: STFT analysis/synthesis and phase-sensitive masks
//! ([`dsp`]), permutation-invariant losses ([`pitloss`]), the (B)LSTM mask
//! estimator with reverse-mode gradients ([`model`]), chunk planning
//! ([`chunker`]), the utterance / CSC / latency-controlled inference engines
//! ([`streamer`]), inter-chunk speaker tracing ([`tracer`]), SI-SDR scoring
//! ([`evalkit`]) and synthetic source generation ([`corpus`]).
//!
//! File formats, the CLI and anything else touching the OS live in the
//! companion `lcsep` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chunker;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod pitloss;
mod rng;
pub mod streamer;
pub mod tracer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::{derive_seed, SeededRng};
