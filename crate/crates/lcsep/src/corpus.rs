//! Synthetic two-source corpus on disk: float WAVs plus a manifest.

use std::path::{Path, PathBuf};

use lcsep_core::corpus::{MixtureRecipe, SynthConfig};
use lcsep_core::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::manifest::{Manifest, MixtureRecord, Split, MANIFEST_FILE};
use crate::wav::{read_wav, write_wav, SampleFormat, Wav};

/// Stored samples live on a `2^-23` grid. Every value in (-1, 1) on that grid
/// is exact in `f32`, and so is the sum of two such values while it stays
/// below 1, so the stored mixture equals the sum of the stored references.
const GRID: f64 = 8_388_608.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub synth: SynthConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { train: 200, valid: 40, test: 40, synth: SynthConfig::default() }
    }
}

impl CorpusConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }
}

/// Seed of record `index` in `split`; the splits draw from disjoint streams.
pub fn record_seed(seed: u64, split: Split, index: usize) -> u64 {
    derive_seed(seed, &[split as u64, index as u64])
}

fn quantize(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

/// Writes every record's mixture and references under `dir/wav` and the
/// manifest at `dir/manifest.tsv`. Creates `dir` if needed.
pub fn build_corpus(cfg: &CorpusConfig, seed: u64, dir: &Path) -> Result<Manifest> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| CliError::io(&wav_dir, e))?;
    let jobs: Vec<(Split, usize)> =
        Split::ALL.into_iter().flat_map(|s| (0..cfg.count(s)).map(move |i| (s, i))).collect();
    let records = jobs
        .par_iter()
        .map(|&(split, index)| build_record(cfg, seed, split, index, dir))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { records };
    manifest.save(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn build_record(cfg: &CorpusConfig, seed: u64, split: Split, index: usize, dir: &Path) -> Result<MixtureRecord> {
    let id = format!("{split}_{index:04}");
    let rseed = record_seed(seed, split, index);
    let recipe = MixtureRecipe::sample(rseed, &cfg.synth);
    let mixed = recipe.generate(cfg.synth.sample_rate).map_err(|e| CliError::from(e).context(&id))?;
    let sources: Vec<Vec<f64>> = mixed.sources.iter().map(|s| s.iter().map(|&x| quantize(x)).collect()).collect();
    let mixture: Vec<f64> = (0..sources[0].len()).map(|t| sources.iter().map(|s| s[t]).sum()).collect();
    let rate = cfg.synth.sample_rate;
    let write = |name: String, samples: Vec<f64>| -> Result<PathBuf> {
        let rel = PathBuf::from("wav").join(name);
        write_wav(dir.join(&rel), &Wav { sample_rate: rate, format: SampleFormat::Float32, samples })?;
        Ok(rel)
    };
    let mixture_path = write(format!("{id}_mix.wav"), mixture)?;
    let source_paths = sources
        .into_iter()
        .enumerate()
        .map(|(s, x)| write(format!("{id}_s{}.wav", s + 1), x))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureRecord {
        id,
        split,
        seed: rseed,
        snr_db: recipe.snr_db,
        mixture: mixture_path,
        sources: source_paths,
        condition: recipe.condition(),
    })
}

/// Audio of one record, read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedRecord {
    pub sample_rate: u32,
    pub mixture: Vec<f64>,
    pub sources: Vec<Vec<f64>>,
}

pub fn load_record(dir: &Path, record: &MixtureRecord) -> Result<LoadedRecord> {
    let mix = read_wav(dir.join(&record.mixture))?;
    let mut sources = Vec::with_capacity(record.sources.len());
    for rel in &record.sources {
        let w = read_wav(dir.join(rel))?;
        if w.sample_rate != mix.sample_rate || w.samples.len() != mix.samples.len() {
            return Err(CliError::Data(format!(
                "{}: source {} differs from the mixture in length or sample rate",
                record.id,
                rel.display()
            )));
        }
        sources.push(w.samples);
    }
    Ok(LoadedRecord { sample_rate: mix.sample_rate, mixture: mix.samples, sources })
}

/// SHA-256 over the manifest and every referenced file, in manifest order.
pub fn corpus_digest(dir: &Path) -> Result<String> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let read = |p: &Path| std::fs::read(p).map_err(|e| CliError::io(p, e));
    let mut h = Sha256::new();
    h.update(read(&manifest_path)?);
    for r in Manifest::load(&manifest_path)?.records {
        for rel in std::iter::once(&r.mixture).chain(&r.sources) {
            h.update(rel.display().to_string().as_bytes());
            h.update(read(&dir.join(rel))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}
