//! Inference engines: whole-utterance BLSTM, context-sensitive chunks (CSC)
//! and latency-controlled chunks (LC) with forward-state carry-over, plus
//! the splicing of main-chunk outputs into utterance-level masks.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::chunker::{plan_chunks, ChunkMethod, ChunkPlan, ChunkSpec, ChunkView};
use crate::dsp::MaskSet;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::model::{Mode, Network, RecurrentState};
use crate::pitloss::Permutation;
use crate::tracer::{decide, overlap_region, OverlapPair, TraceConfig, TraceDecision, Verdict};

/// Raw outputs of one chunk over every frame it forwarded.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkOutput {
    pub view: ChunkView,
    /// Absolute frames forwarded for this chunk.
    pub window: Range<usize>,
    /// Masks over `window`.
    pub masks: MaskSet,
}

impl ChunkOutput {
    pub fn main_masks(&self) -> MaskSet {
        let start = self.view.main.start - self.window.start;
        self.masks.slice_frames(start..start + self.view.main.len())
    }
}

/// Outputs of a chunked engine over one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedInference {
    pub plan: ChunkPlan,
    pub chunks: Vec<ChunkOutput>,
}

impl ChunkedInference {
    /// Recurrent frames forwarded per chunk.
    pub fn frames_forwarded(&self) -> Vec<usize> {
        self.chunks.iter().map(|c| c.window.len()).collect()
    }

    pub fn mains(&self) -> Vec<MaskSet> {
        self.chunks.iter().map(ChunkOutput::main_masks).collect()
    }

    /// Concatenates main-chunk outputs, applying `verdicts` cumulatively.
    pub fn splice(&self, verdicts: &[Verdict]) -> Result<MaskSet> {
        splice(&self.mains(), verdicts)
    }
}

/// One forward pass over every frame from zero states.
pub fn infer_utterance(net: &Network, features: &Matrix) -> Result<MaskSet> {
    Ok(net.forward(features, None, Mode::Infer, features.rows())?.masks)
}

/// Each chunk is forwarded over `left_ctx + main + right_ctx` from zero
/// states in both directions.
pub fn infer_csc(net: &Network, features: &Matrix, spec: &ChunkSpec) -> Result<ChunkedInference> {
    let plan = plan_chunks(features.rows(), spec)?;
    let chunks = plan
        .chunks()
        .iter()
        .map(|view| {
            let window = view.csc_window();
            let pass = net.forward(&features.slice_rows(window.clone()), None, Mode::Infer, window.len())?;
            Ok(ChunkOutput { view: view.clone(), window, masks: pass.masks })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChunkedInference { plan, chunks })
}

/// Runs a [`StreamSession`] over a whole utterance without tracing.
pub fn infer_lc(net: &Network, features: &Matrix, spec: &ChunkSpec) -> Result<ChunkedInference> {
    let plan = plan_chunks(features.rows(), spec)?;
    let mut session = StreamSession::new(net, *spec, None);
    let chunks = plan
        .chunks()
        .iter()
        .map(|view| Ok(session.push(view, &features.slice_rows(view.lc_window()))?.output))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChunkedInference { plan, chunks })
}

/// What one [`StreamSession::push`] returns.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamedChunk {
    /// Main-frame masks with the cumulative trace permutation applied.
    pub main: MaskSet,
    pub output: ChunkOutput,
    /// Tracing verdict for the boundary entering this chunk.
    pub decision: Option<TraceDecision>,
}

/// Incremental latency-controlled inference over one utterance.
///
/// Chunks arrive in order as `main + right_ctx` features. The forward
/// direction resumes from the state left at the end of the previous chunk's
/// main frames; the backward direction starts from zero at the end of the
/// right context.
pub struct StreamSession<'a> {
    net: &'a Network,
    spec: ChunkSpec,
    carried: RecurrentState,
    next_index: usize,
    next_start: usize,
    trace: Option<TraceConfig>,
    /// Maps result stream `s` to the current chunk's stream.
    flip: Permutation,
    /// Previous chunk's view and masked outputs over its window.
    previous: Option<(ChunkView, Range<usize>, Vec<Matrix>)>,
    frames_forwarded: usize,
}

impl<'a> StreamSession<'a> {
    pub fn new(net: &'a Network, spec: ChunkSpec, trace: Option<TraceConfig>) -> Self {
        let streams = net.config().num_outputs;
        Self {
            net,
            spec,
            carried: net.zero_state(),
            next_index: 0,
            next_start: 0,
            trace,
            flip: Permutation::identity(streams),
            previous: None,
            frames_forwarded: 0,
        }
    }

    pub fn spec(&self) -> &ChunkSpec {
        &self.spec
    }

    pub fn carried_state(&self) -> &RecurrentState {
        &self.carried
    }

    pub fn flip(&self) -> &Permutation {
        &self.flip
    }

    pub fn frames_forwarded(&self) -> usize {
        self.frames_forwarded
    }

    pub fn push(&mut self, view: &ChunkView, features: &Matrix) -> Result<StreamedChunk> {
        if view.index != self.next_index || view.main.start != self.next_start {
            return Err(Error::InvalidState(format!(
                "expected chunk {} starting at frame {}, got chunk {} at {}",
                self.next_index, self.next_start, view.index, view.main.start
            )));
        }
        let window = view.lc_window();
        if features.rows() != window.len() {
            return Err(invalid!("chunk {} needs {} frames, got {}", view.index, window.len(), features.rows()));
        }
        let pass = self.net.forward(features, Some(&self.carried), Mode::Infer, view.main.len())?;
        self.carried = pass.final_state;
        self.next_index += 1;
        self.next_start = view.main.end;
        self.frames_forwarded += window.len();
        let output = ChunkOutput { view: view.clone(), window: window.clone(), masks: pass.masks };

        let mut decision = None;
        if let Some(cfg) = &self.trace {
            let masked = output.masks.apply_to_magnitude(features)?;
            if let Some((prev_view, prev_window, prev_masked)) = &self.previous {
                let range = overlap_region(prev_view, view, ChunkMethod::Lc)?;
                if !range.is_empty() {
                    let cut = |ms: &[Matrix], w: &Range<usize>| -> Vec<Matrix> {
                        ms.iter().map(|m| m.slice_rows(range.start - w.start..range.end - w.start)).collect()
                    };
                    let pair = OverlapPair::new(cut(prev_masked, prev_window), cut(&masked, &window))?;
                    let d = decide(&pair, cfg)?;
                    self.flip = self.flip.then(&d.verdict.relative(self.flip.len()));
                    decision = Some(d);
                }
            }
            self.previous = Some((view.clone(), window, masked));
        }
        let main = permute_streams(&output.main_masks(), &self.flip)?;
        Ok(StreamedChunk { main, output, decision })
    }
}

fn permute_streams(masks: &MaskSet, map: &Permutation) -> Result<MaskSet> {
    MaskSet::new((0..masks.streams()).map(|s| masks.stream(map.apply(s)).clone()).collect())
}

/// Concatenates per-chunk main masks. `verdicts[k]` describes the boundary
/// between chunk `k` and `k + 1`; changes compose cumulatively, so result
/// stream `s` follows the same source through every chunk. An empty verdict
/// list means keep everywhere.
pub fn splice(mains: &[MaskSet], verdicts: &[Verdict]) -> Result<MaskSet> {
    let first = mains.first().ok_or_else(|| invalid!("nothing to splice"))?;
    if !verdicts.is_empty() && verdicts.len() + 1 != mains.len() {
        return Err(invalid!("{} verdicts for {} chunks", verdicts.len(), mains.len()));
    }
    let streams = first.streams();
    let mut flip = Permutation::identity(streams);
    let mut parts = Vec::with_capacity(mains.len());
    for (k, m) in mains.iter().enumerate() {
        if m.streams() != streams {
            return Err(invalid!("chunk {k} has {} streams, expected {streams}", m.streams()));
        }
        if k > 0 {
            if let Some(v) = verdicts.get(k - 1) {
                flip = flip.then(&v.relative(streams));
            }
        }
        parts.push(permute_streams(m, &flip)?);
    }
    MaskSet::concat(&parts)
}
