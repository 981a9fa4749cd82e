//! Phase-sensitive MSE and permutation-invariant (utterance / chunk level)
//! cost functions.
//!
//! Targets are precomputed as `clamp(PSM) * |Y|`, so the cosine weighting of
//! the phase-sensitive cost lives in one place ([`psm_targets`]).

use alloc::vec::Vec;
use core::ops::Range;

use crate::chunker::ChunkView;
use crate::dsp::{psm_target, MaskSet, Spectrogram};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Largest source count for which permutations are enumerated.
pub const MAX_SOURCES: usize = 4;

/// Bijection on `0..S`: output stream `s` is scored against target `mapping[s]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = [false; 64];
        for &m in &mapping {
            if m >= mapping.len() || m >= seen.len() || seen[m] {
                return Err(invalid!("{mapping:?} is not a permutation"));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self { mapping: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    #[inline]
    pub fn apply(&self, s: usize) -> usize {
        self.mapping[s]
    }

    /// `(self.then(other))(s) = other(self(s))`.
    pub fn then(&self, other: &Permutation) -> Permutation {
        Permutation { mapping: self.mapping.iter().map(|&m| other.mapping[m]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = alloc::vec![0; self.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { mapping: inv }
    }

    /// All `n!` permutations in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut cur: Vec<usize> = (0..n).collect();
        let mut out = alloc::vec![Permutation { mapping: cur.clone() }];
        while next_lexicographic(&mut cur) {
            out.push(Permutation { mapping: cur.clone() });
        }
        out
    }
}

fn next_lexicographic(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Normalization and error-frame bookkeeping for one loss evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossContext {
    pub sources: usize,
    pub bins: usize,
    /// Frames (within the forwarded window) that generate error.
    pub error_frames: Range<usize>,
}

impl LossContext {
    pub fn new(sources: usize, bins: usize, error_frames: Range<usize>) -> Self {
        Self { sources, bins, error_frames }
    }

    /// Context covering a whole utterance of `frames` frames.
    pub fn utterance(sources: usize, bins: usize, frames: usize) -> Self {
        Self::new(sources, bins, 0..frames)
    }

    /// `B = T * F * S` with `T` counting error frames only.
    pub fn normalizer(&self) -> usize {
        self.error_frames.len() * self.bins * self.sources
    }
}

/// `clamp(PSM_s) * |Y|` for each source.
pub fn psm_targets(sources: &[Spectrogram], mixture: &Spectrogram) -> Result<Vec<Matrix>> {
    let mag = mixture.magnitude();
    sources.iter().map(|s| psm_target(s, mixture)?.hadamard(&mag)).collect()
}

fn check_shapes(masks: &MaskSet, mixture_mag: &Matrix, targets: &[Matrix], ctx: &LossContext) -> Result<()> {
    let shape = mixture_mag.shape();
    if masks.streams() != ctx.sources || targets.len() != ctx.sources {
        return Err(invalid!(
            "{} mask streams and {} targets for {} sources",
            masks.streams(),
            targets.len(),
            ctx.sources
        ));
    }
    if (masks.frames(), masks.bins()) != shape || targets.iter().any(|t| t.shape() != shape) {
        return Err(invalid!("masks, mixture magnitude and targets must share shape {shape:?}"));
    }
    if shape.1 != ctx.bins {
        return Err(invalid!("context expects {} bins, data has {}", ctx.bins, shape.1));
    }
    if ctx.error_frames.is_empty() || ctx.error_frames.end > shape.0 {
        return Err(invalid!("error range {:?} is empty or exceeds {} frames", ctx.error_frames, shape.0));
    }
    Ok(())
}

/// Squared error of one output stream against one target over the error frames.
fn pair_cost(mask: &Matrix, mixture_mag: &Matrix, target: &Matrix, frames: &Range<usize>) -> f64 {
    let mut acc = 0.0;
    for t in frames.clone() {
        for ((m, y), x) in mask.row(t).iter().zip(mixture_mag.row(t)).zip(target.row(t)) {
            let d = m * y - x;
            acc += d * d;
        }
    }
    acc
}

/// `cost[s][k]`: error of output stream `s` scored against target `k`.
fn cost_matrix(masks: &MaskSet, mixture_mag: &Matrix, targets: &[Matrix], ctx: &LossContext) -> Vec<Vec<f64>> {
    masks
        .masks()
        .iter()
        .map(|m| targets.iter().map(|x| pair_cost(m, mixture_mag, x, &ctx.error_frames)).collect())
        .collect()
}

fn perm_cost(costs: &[Vec<f64>], perm: &Permutation) -> f64 {
    costs.iter().enumerate().map(|(s, row)| row[perm.apply(s)]).sum()
}

/// `(1/B) sum_s || M_s o |Y| - target_{perm(s)} ||^2` over the error frames.
pub fn psm_mse(
    masks: &MaskSet,
    mixture_mag: &Matrix,
    targets: &[Matrix],
    perm: &Permutation,
    ctx: &LossContext,
) -> Result<f64> {
    check_shapes(masks, mixture_mag, targets, ctx)?;
    if perm.len() != ctx.sources {
        return Err(invalid!("permutation of {} for {} sources", perm.len(), ctx.sources));
    }
    let costs = cost_matrix(masks, mixture_mag, targets, ctx);
    Ok(perm_cost(&costs, perm) / ctx.normalizer() as f64)
}

/// Gradient of [`psm_mse`] with respect to each mask, zero outside the error frames.
pub fn psm_mse_grad(
    masks: &MaskSet,
    mixture_mag: &Matrix,
    targets: &[Matrix],
    perm: &Permutation,
    ctx: &LossContext,
) -> Result<Vec<Matrix>> {
    check_shapes(masks, mixture_mag, targets, ctx)?;
    let scale = 2.0 / ctx.normalizer() as f64;
    let (frames, bins) = mixture_mag.shape();
    Ok(masks
        .masks()
        .iter()
        .enumerate()
        .map(|(s, m)| {
            let target = &targets[perm.apply(s)];
            let mut g = Matrix::zeros(frames, bins);
            for t in ctx.error_frames.clone() {
                let row = g.row_mut(t);
                for f in 0..bins {
                    let y = mixture_mag.get(t, f);
                    row[f] = scale * (m.get(t, f) * y - target.get(t, f)) * y;
                }
            }
            g
        })
        .collect())
}

/// Exhaustive search over all `S!` permutations; ties go to the
/// lexicographically smallest mapping.
pub fn best_permutation(
    masks: &MaskSet,
    mixture_mag: &Matrix,
    targets: &[Matrix],
    ctx: &LossContext,
) -> Result<(Permutation, f64)> {
    if ctx.sources > MAX_SOURCES {
        return Err(Error::Unsupported(alloc::format!(
            "{} sources exceeds the enumeration limit of {MAX_SOURCES}",
            ctx.sources
        )));
    }
    check_shapes(masks, mixture_mag, targets, ctx)?;
    let costs = cost_matrix(masks, mixture_mag, targets, ctx);
    let mut best: Option<(Permutation, f64)> = None;
    for perm in Permutation::all(ctx.sources) {
        let c = perm_cost(&costs, &perm);
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((perm, c));
        }
    }
    let (perm, cost) = best.expect("at least one permutation");
    Ok((perm, cost / ctx.normalizer() as f64))
}

/// Utterance-level PIT: one permutation chosen jointly over all frames.
pub fn upit_loss(
    masks: &MaskSet,
    mixture_mag: &Matrix,
    targets: &[Matrix],
    ctx: &LossContext,
) -> Result<(f64, Permutation)> {
    if ctx.error_frames != (0..mixture_mag.rows()) {
        return Err(invalid!(
            "utterance-level loss needs the full frame range 0..{}, got {:?}",
            mixture_mag.rows(),
            ctx.error_frames
        ));
    }
    let (perm, loss) = best_permutation(masks, mixture_mag, targets, ctx)?;
    Ok((loss, perm))
}

/// Frames of a context-sensitive chunk's forwarded window
/// (`left_ctx + main + right_ctx`) that carry error: the main frames.
pub fn chunk_error_frames(chunk: &ChunkView) -> Range<usize> {
    let w = chunk.csc_window();
    chunk.main.start - w.start..chunk.main.end - w.start
}

/// Chunk-level PIT: masks, magnitude and targets cover the chunk's forwarded
/// window; permutation search and loss use the main frames only.
pub fn cpit_loss(
    masks: &MaskSet,
    mixture_mag: &Matrix,
    targets: &[Matrix],
    chunk: &ChunkView,
) -> Result<(f64, Permutation)> {
    let window = chunk.csc_window();
    if mixture_mag.rows() != window.len() {
        return Err(invalid!("chunk window has {} frames, data has {}", window.len(), mixture_mag.rows()));
    }
    let error = chunk_error_frames(chunk);
    if error.is_empty() {
        return Err(invalid!("chunk {} has no main frames", chunk.index));
    }
    let ctx = LossContext::new(masks.streams(), mixture_mag.cols(), error);
    let (perm, loss) = best_permutation(masks, mixture_mag, targets, &ctx)?;
    Ok((loss, perm))
}
