//! Inter-chunk speaker tracing.
//!
//! Neighbouring chunks forward some frames in common. Comparing the two
//! chunks' masked-magnitude outputs on those frames under the identity and
//! the exchanged stream assignment (`E1` and `E2`) reveals whether the output
//! permutation changed across the boundary. A change is declared only when
//! `E1 > alpha * E2`, so near-ties (for example a silent overlap) keep the
//! current assignment.

use alloc::vec::Vec;
use core::ops::Range;

use crate::chunker::{ChunkMethod, ChunkView};
use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::pitloss::Permutation;
use crate::streamer::ChunkOutput;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TraceConfig {
    /// Penalty factor on the exchanged-assignment error, `>= 1`.
    pub alpha: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

impl TraceConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = Self { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(invalid!("penalty factor {} must be >= 1", self.alpha));
        }
        Ok(())
    }
}

/// Output streams of both chunks restricted to their shared frames.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapPair {
    pub prev: Vec<Matrix>,
    pub cur: Vec<Matrix>,
}

impl OverlapPair {
    pub fn new(prev: Vec<Matrix>, cur: Vec<Matrix>) -> Result<Self> {
        let shape = prev.first().map(Matrix::shape).ok_or_else(|| invalid!("overlap has no streams"))?;
        if prev.len() != cur.len() || prev.iter().chain(&cur).any(|m| m.shape() != shape) {
            return Err(invalid!("overlap streams must agree in count and shape"));
        }
        if shape.0 == 0 {
            return Err(invalid!("overlap has no frames"));
        }
        Ok(Self { prev, cur })
    }

    pub fn frames(&self) -> usize {
        self.prev[0].rows()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    /// Previous stream `j` continues as current stream `perm.apply(j)`.
    Swap(Permutation),
}

impl Verdict {
    pub fn is_swap(&self) -> bool {
        matches!(self, Verdict::Swap(_))
    }

    pub fn relative(&self, streams: usize) -> Permutation {
        match self {
            Verdict::Keep => Permutation::identity(streams),
            Verdict::Swap(p) => p.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceDecision {
    pub verdict: Verdict,
    /// Error under the current assignment.
    pub e1: f64,
    /// Error under the best changed assignment.
    pub e2: f64,
    /// Shared frames compared; zero when tracing was skipped.
    pub overlap_frames: usize,
}

impl TraceDecision {
    fn skipped() -> Self {
        Self { verdict: Verdict::Keep, e1: 0.0, e2: 0.0, overlap_frames: 0 }
    }
}

/// Frames forwarded by both adjacent chunks.
pub fn overlap_region(prev: &ChunkView, cur: &ChunkView, method: ChunkMethod) -> Result<Range<usize>> {
    if prev.index + 1 != cur.index || prev.main.end != cur.main.start {
        return Err(invalid!("chunks {} and {} are not adjacent", prev.index, cur.index));
    }
    let (a, b) = (method.window(prev), method.window(cur));
    let start = a.start.max(b.start);
    let end = a.end.min(b.end).max(start);
    Ok(start..end)
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len() as f64;
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// `E(perm) = sum_j MSE(prev_j, cur_{perm(j)})`; a change is declared iff
/// `E(identity) > alpha * min_{perm != identity} E(perm)`.
pub fn decide(pair: &OverlapPair, cfg: &TraceConfig) -> Result<TraceDecision> {
    cfg.validate()?;
    let streams = pair.prev.len();
    let costs: Vec<Vec<f64>> = pair.prev.iter().map(|p| pair.cur.iter().map(|c| mse(p, c)).collect()).collect();
    let energy = |perm: &Permutation| -> f64 { (0..streams).map(|j| costs[j][perm.apply(j)]).sum() };
    let e1 = energy(&Permutation::identity(streams));
    let mut best: Option<(Permutation, f64)> = None;
    for perm in Permutation::all(streams).into_iter().filter(|p| !p.is_identity()) {
        let e = energy(&perm);
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((perm, e));
        }
    }
    let frames = pair.frames();
    Ok(match best {
        None => TraceDecision { verdict: Verdict::Keep, e1, e2: e1, overlap_frames: frames },
        Some((perm, e2)) => {
            let verdict = if e1 > cfg.alpha * e2 { Verdict::Swap(perm) } else { Verdict::Keep };
            TraceDecision { verdict, e1, e2, overlap_frames: frames }
        }
    })
}

/// Masked magnitudes of one chunk's outputs over absolute frames `range`.
fn masked_over(chunk: &ChunkOutput, mixture_mag: &Matrix, range: &Range<usize>) -> Result<Vec<Matrix>> {
    let local = range.start - chunk.window.start..range.end - chunk.window.start;
    let mag = mixture_mag.slice_rows(range.clone());
    chunk.masks.slice_frames(local).apply_to_magnitude(&mag)
}

/// One decision per chunk boundary. Boundaries without shared frames (for
/// example latency-controlled chunks with no right context) are kept.
pub fn trace_utterance(
    chunks: &[ChunkOutput],
    mixture_mag: &Matrix,
    method: ChunkMethod,
    cfg: &TraceConfig,
) -> Result<Vec<TraceDecision>> {
    chunks
        .windows(2)
        .map(|w| {
            let range = overlap_region(&w[0].view, &w[1].view, method)?;
            if range.is_empty() {
                return Ok(TraceDecision::skipped());
            }
            let pair = OverlapPair::new(
                masked_over(&w[0], mixture_mag, &range)?,
                masked_over(&w[1], mixture_mag, &range)?,
            )?;
            decide(&pair, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::{plan_chunks, ChunkSpec};
    use alloc::vec;

    fn pair(prev: [f64; 2], cur: [f64; 2]) -> OverlapPair {
        let m = |v: f64| Matrix::filled(3, 2, v);
        OverlapPair::new(vec![m(prev[0]), m(prev[1])], vec![m(cur[0]), m(cur[1])]).unwrap()
    }

    #[test]
    fn overlap_regions() {
        let plan = plan_chunks(400, &ChunkSpec::new(50, 100, 50).unwrap()).unwrap();
        let (a, b) = (&plan.chunks()[1], &plan.chunks()[2]);
        assert_eq!(overlap_region(a, b, ChunkMethod::Lc).unwrap(), 200..250);
        assert_eq!(overlap_region(a, b, ChunkMethod::Csc).unwrap(), 150..250);
        assert!(overlap_region(&plan.chunks()[0], b, ChunkMethod::Lc).is_err());
        let plan0 = plan_chunks(400, &ChunkSpec::new(50, 100, 0).unwrap()).unwrap();
        assert!(overlap_region(&plan0.chunks()[1], &plan0.chunks()[2], ChunkMethod::Lc).unwrap().is_empty());
    }

    #[test]
    fn decisions() {
        let cfg = TraceConfig::default();
        let same = decide(&pair([1.0, 0.2], [1.0, 0.2]), &cfg).unwrap();
        assert_eq!((same.verdict.clone(), same.e1), (Verdict::Keep, 0.0));
        let swapped = decide(&pair([1.0, 0.2], [0.2, 1.0]), &cfg).unwrap();
        assert!(swapped.verdict.is_swap());
        assert_eq!(swapped.e2, 0.0);
        let silent = decide(&pair([0.0, 0.0], [0.0, 0.0]), &cfg).unwrap();
        assert_eq!(silent.verdict, Verdict::Keep);
        let inf = decide(&pair([1.0, 0.2], [0.2, 1.0]), &TraceConfig::new(f64::INFINITY).unwrap()).unwrap();
        assert_eq!(inf.verdict, Verdict::Keep);
        // Exactly at the threshold keeps.
        let p = pair([0.0, 0.0], [1.0, 0.0]);
        let d = decide(&p, &TraceConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(d.e1, d.e2);
        assert_eq!(d.verdict, Verdict::Keep);
    }

    #[test]
    fn invalid_config_and_overlap() {
        assert!(TraceConfig::new(0.5).is_err());
        assert!(TraceConfig::new(f64::NAN).is_err());
        assert!(OverlapPair::new(vec![Matrix::zeros(0, 2)], vec![Matrix::zeros(0, 2)]).is_err());
    }
}
