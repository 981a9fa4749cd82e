//! Run configuration: one TOML file holding every module's settings.
//!
//! Missing keys take built-in defaults; command-line flags override both.

use std::path::{Path, PathBuf};

use lcsep_core::chunker::ChunkSpec;
use lcsep_core::dsp::StftConfig;
use lcsep_core::model::{NetworkConfig, TrainSchedule};
use lcsep_core::tracer::TraceConfig;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus directory holding `manifest.tsv`.
    pub corpus: PathBuf,
    /// Per-command output directory.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: "corpus".into(), out: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpitConfig {
    /// Chunks per minibatch when training on chunks.
    pub batch_chunks: usize,
}

impl Default for CpitConfig {
    fn default() -> Self {
        Self { batch_chunks: 32 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives corpus generation and minibatch order.
    pub seed: u64,
    /// Compute minibatch gradients on a thread pool; results are identical.
    pub parallel_batches: bool,
    pub paths: Paths,
    pub stft: StftConfig,
    pub network: NetworkConfig,
    pub chunk: ChunkSpec,
    pub trace: TraceConfig,
    pub train: TrainSchedule,
    pub cpit: CpitConfig,
    pub corpus: CorpusConfig,
}

/// Values given on the command line; `None` leaves the loaded value alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Sets both the run seed and the network initialization seed.
    pub seed: Option<u64>,
    pub left: Option<usize>,
    pub main: Option<usize>,
    pub right: Option<usize>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.network.seed = seed;
        }
        if let Some(v) = self.left {
            cfg.chunk.left = v;
        }
        if let Some(v) = self.main {
            cfg.chunk.main = v;
        }
        if let Some(v) = self.right {
            cfg.chunk.right = v;
        }
        if let Some(v) = self.alpha {
            cfg.trace.alpha = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = &self.corpus {
            cfg.paths.corpus = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.paths.out = v.clone();
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Defaults, overlaid by `file` if given, overlaid by `overrides`, then
    /// validated.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: lcsep_core::Error| CliError::Usage(e.to_string());
        self.stft.validate().map_err(usage)?;
        self.network.validate().map_err(usage)?;
        self.chunk.validate().map_err(usage)?;
        self.trace.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        if self.network.input_dim != self.stft.bins() {
            return Err(CliError::Usage(format!(
                "network.input_dim is {} but the STFT yields {} bins",
                self.network.input_dim,
                self.stft.bins()
            )));
        }
        if self.corpus.synth.sample_rate != self.stft.sample_rate {
            return Err(CliError::Usage("corpus.synth.sample_rate and stft.sample_rate differ".into()));
        }
        if self.cpit.batch_chunks == 0 {
            return Err(CliError::Usage("cpit.batch_chunks must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.stft.bins(), 129);
        assert_eq!((cfg.network.cell_dim, cfg.network.num_recurrent_layers), (64, 2));
        assert_eq!((cfg.train.batch_units, cfg.cpit.batch_chunks, cfg.train.epochs), (4, 32, 8));
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\n[chunk]\nleft = 7\nmain = 12\n[trace]\nalpha = 3.0\n").unwrap();

        let from_file = RunConfig::resolve(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(from_file.seed, 5);
        assert_eq!((from_file.chunk.left, from_file.chunk.main), (7, 12));
        assert_eq!(from_file.chunk.right, ChunkSpec::default().right);
        assert_eq!(from_file.trace.alpha, 3.0);
        assert_eq!(from_file.train, TrainSchedule::default());

        let flags = Overrides { seed: Some(9), left: Some(1), alpha: Some(2.5), ..Overrides::default() };
        let cfg = RunConfig::resolve(Some(&path), &flags).unwrap();
        assert_eq!((cfg.seed, cfg.network.seed), (9, 9));
        assert_eq!((cfg.chunk.left, cfg.chunk.main), (1, 12));
        assert_eq!(cfg.trace.alpha, 2.5);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(CliError::Usage(_))));
        assert!(RunConfig::parse("[network]\ninput_dim = 10").unwrap().validate().is_err());
        let flags = Overrides { alpha: Some(0.5), ..Overrides::default() };
        assert!(RunConfig::resolve(None, &flags).is_err());
    }
}
