//! Frame-axis chunking into non-overlapping main chunks with appended
//! left/right context, plus latency and compute accounting.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Result};

/// `(N_l, N, N_r)`: left context, main and right context frame counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ChunkSpec {
    pub left: usize,
    pub main: usize,
    pub right: usize,
}

impl ChunkSpec {
    pub fn new(left: usize, main: usize, right: usize) -> Result<Self> {
        let spec = Self { left, main, right };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.main == 0 {
            return Err(invalid!("main chunk length must be at least one frame"));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.left + self.main + self.right
    }
}

impl Default for ChunkSpec {
    fn default() -> Self {
        Self { left: 10, main: 20, right: 10 }
    }
}

/// One chunk of a plan. Empty context ranges sit at the main boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkView {
    pub index: usize,
    pub main: Range<usize>,
    pub left_ctx: Range<usize>,
    pub right_ctx: Range<usize>,
}

impl ChunkView {
    /// Frames forwarded by context-sensitive chunking: left + main + right.
    pub fn csc_window(&self) -> Range<usize> {
        self.left_ctx.start..self.right_ctx.end
    }

    /// Frames forwarded by latency-controlled chunking: main + right.
    pub fn lc_window(&self) -> Range<usize> {
        self.main.start..self.right_ctx.end
    }
}

/// Which frames a chunked engine forwards for each chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkMethod {
    /// Context-sensitive chunks: left context, main, right context; zero states.
    Csc,
    /// Latency-controlled: main and right context; forward state carried over.
    Lc,
}

impl ChunkMethod {
    pub fn window(&self, view: &ChunkView) -> Range<usize> {
        match self {
            ChunkMethod::Csc => view.csc_window(),
            ChunkMethod::Lc => view.lc_window(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    frames: usize,
    spec: ChunkSpec,
    chunks: Vec<ChunkView>,
}

impl ChunkPlan {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn spec(&self) -> &ChunkSpec {
        &self.spec
    }

    pub fn chunks(&self) -> &[ChunkView] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

pub fn plan_chunks(frames: usize, spec: &ChunkSpec) -> Result<ChunkPlan> {
    spec.validate()?;
    if frames == 0 {
        return Err(invalid!("cannot chunk an utterance with zero frames"));
    }
    let chunks = (0..frames.div_ceil(spec.main))
        .map(|index| {
            let start = index * spec.main;
            let end = (start + spec.main).min(frames);
            ChunkView {
                index,
                main: start..end,
                left_ctx: start.saturating_sub(spec.left)..start,
                right_ctx: end..(end + spec.right).min(frames),
            }
        })
        .collect();
    Ok(ChunkPlan { frames, spec: *spec, chunks })
}

/// Algorithmic latency of latency-controlled inference: `shift * N_r`.
pub fn latency_ms(spec: &ChunkSpec, shift_ms: f64) -> f64 {
    shift_ms * spec.right as f64
}

/// Fraction of recurrent frames saved by dropping left context:
/// `N_l / (N_l + N + N_r)`.
pub fn compute_saving(spec: &ChunkSpec) -> f64 {
    spec.left as f64 / spec.span() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_chunk() {
        let spec = ChunkSpec::new(50, 100, 50).unwrap();
        let plan = plan_chunks(100, &spec).unwrap();
        assert_eq!(plan.len(), 1);
        let c = &plan.chunks()[0];
        assert_eq!(c.main, 0..100);
        assert!(c.left_ctx.is_empty() && c.right_ctx.is_empty());

        let plan = plan_chunks(1, &spec).unwrap();
        assert_eq!(plan.chunks()[0].main, 0..1);
        assert!(plan.chunks()[0].left_ctx.is_empty() && plan.chunks()[0].right_ctx.is_empty());
    }

    #[test]
    fn three_chunks() {
        let plan = plan_chunks(250, &ChunkSpec::new(50, 100, 50).unwrap()).unwrap();
        let c = plan.chunks();
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].main.clone(), c[1].main.clone(), c[2].main.clone()), (0..100, 100..200, 200..250));
        assert_eq!(c[0].right_ctx, 100..150);
        assert_eq!(c[2].left_ctx, 150..200);
        assert!(c[2].right_ctx.is_empty());
        assert_eq!(c[1].csc_window(), 50..250);
        assert_eq!(c[1].lc_window(), 100..250);
    }

    #[test]
    fn errors() {
        assert!(plan_chunks(0, &ChunkSpec::default()).is_err());
        assert!(ChunkSpec::new(1, 0, 1).is_err());
    }

    #[test]
    fn latency_and_saving() {
        let s = |l, n, r| ChunkSpec::new(l, n, r).unwrap();
        assert_eq!(latency_ms(&s(50, 100, 50), 16.0), 800.0);
        assert_eq!(latency_ms(&s(50, 100, 0), 16.0), 0.0);
        assert_eq!(latency_ms(&s(50, 100, 100), 16.0), 1600.0);
        assert_eq!(compute_saving(&s(50, 100, 50)), 0.25);
        assert_eq!(compute_saving(&s(0, 100, 50)), 0.0);
        assert_eq!(compute_saving(&s(100, 100, 0)), 0.5);
    }
}
