//! Loading corpus splits into analysis-ready utterances.

use std::path::Path;

use lcsep_core::dsp::Stft;
use lcsep_core::pipeline::PreparedUtterance;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{load_record, LoadedRecord};
use crate::error::{CliError, Result};
use crate::manifest::{Manifest, MixtureRecord, Split, MANIFEST_FILE};

#[derive(Clone, Debug)]
pub struct Utterance {
    pub record: MixtureRecord,
    pub audio: LoadedRecord,
    pub prepared: PreparedUtterance,
}

impl Utterance {
    pub fn new(record: MixtureRecord, audio: LoadedRecord, stft: &Stft) -> Result<Self> {
        if audio.sample_rate != stft.config().sample_rate {
            return Err(CliError::Data(format!(
                "{}: sample rate {} Hz, expected {} Hz",
                record.id,
                audio.sample_rate,
                stft.config().sample_rate
            )));
        }
        let prepared = PreparedUtterance::new(stft, &audio.mixture, &audio.sources)
            .map_err(|e| CliError::from(e).context(&record.id))?;
        Ok(Self { record, audio, prepared })
    }
}

pub fn load_manifest(corpus: &Path) -> Result<Manifest> {
    Manifest::load(corpus.join(MANIFEST_FILE))
}

/// Reads and analyzes every record of `split`, in manifest order.
pub fn load_split(cfg: &RunConfig, manifest: &Manifest, split: Split) -> Result<Vec<Utterance>> {
    let stft = Stft::new(&cfg.stft)?;
    let records: Vec<&MixtureRecord> = manifest.split(split).collect();
    records
        .par_iter()
        .map(|r| Utterance::new((*r).clone(), load_record(&cfg.paths.corpus, r)?, &stft))
        .collect()
}
