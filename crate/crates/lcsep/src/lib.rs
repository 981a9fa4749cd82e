//! Corpus building, training, separation, evaluation and benchmarking
//! around [`lcsep_core`], plus the file formats they exchange.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod separate;
pub mod train;
pub mod wav;

pub use error::{CliError, Result};
