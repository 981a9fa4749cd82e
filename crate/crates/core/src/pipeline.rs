//! Glue between waveforms and the network: feature/target preparation,
//! chunk-level training items and masked resynthesis.

use alloc::vec::Vec;

use crate::chunker::{plan_chunks, ChunkSpec};
use crate::dsp::{apply_mask, MaskSet, Spectrogram, Stft};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::model::TrainItem;
use crate::pitloss::psm_targets;

/// A mixture in the time-frequency domain plus its training targets.
#[derive(Clone, Debug)]
pub struct PreparedUtterance {
    pub samples: usize,
    pub mixture: Spectrogram,
    /// `|Y|`, the network input.
    pub features: Matrix,
    /// `clamp(PSM_s) * |Y|` per source; empty when no references were given.
    pub targets: Vec<Matrix>,
}

impl PreparedUtterance {
    pub fn new(stft: &Stft, mixture: &[f64], sources: &[Vec<f64>]) -> Result<Self> {
        let spec = stft.analyze(mixture)?;
        let source_specs = sources.iter().map(|s| stft.analyze(s)).collect::<Result<Vec<_>>>()?;
        let targets = if source_specs.is_empty() { Vec::new() } else { psm_targets(&source_specs, &spec)? };
        Ok(Self { samples: mixture.len(), features: spec.magnitude(), mixture: spec, targets })
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn utterance_item(&self) -> TrainItem {
        TrainItem::utterance(self.features.clone(), self.targets.clone())
    }

    /// One item per context-sensitive chunk.
    pub fn chunk_items(&self, spec: &ChunkSpec) -> Result<Vec<TrainItem>> {
        let plan = plan_chunks(self.frames(), spec)?;
        plan.chunks()
            .iter()
            .map(|view| {
                let w = view.csc_window();
                let targets = self.targets.iter().map(|t| t.slice_rows(w.clone())).collect();
                TrainItem::chunk(self.features.slice_rows(w), targets, view)
            })
            .collect()
    }

    /// Applies each mask to the mixture STFT and inverts it.
    pub fn reconstruct(&self, stft: &Stft, masks: &MaskSet) -> Result<Vec<Vec<f64>>> {
        masks
            .masks()
            .iter()
            .map(|m| stft.synthesize(&apply_mask(m, &self.mixture)?, self.samples))
            .collect()
    }

    /// Clamped phase-sensitive masks of the references, the oracle upper bound.
    pub fn oracle_masks(&self) -> Result<MaskSet> {
        let masks = self
            .targets
            .iter()
            .map(|t| {
                Matrix::from_vec(
                    t.rows(),
                    t.cols(),
                    t.as_slice()
                        .iter()
                        .zip(self.features.as_slice())
                        .map(|(x, y)| if *y >= crate::dsp::SILENCE_EPS { x / y } else { 0.0 })
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MaskSet::new(masks)
    }
}
