//! Right-context sweep: latency, compute and quality per `right` setting.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use lcsep_core::chunker::{latency_ms, ChunkSpec};
use lcsep_core::model::Network;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{load_manifest, load_split, Utterance};
use crate::error::{CliError, Result};
use crate::eval::score;
use crate::manifest::Split;
use crate::separate::{separate_all, separate_features, Method};
use crate::train::write_file;

pub const DEFAULT_NR_LIST: [usize; 6] = [0, 10, 25, 35, 50, 100];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub right: usize,
    pub latency_ms: f64,
    /// Wall-clock milliseconds per chunk; the only non-deterministic column.
    pub lc_ms_per_chunk: f64,
    pub csc_ms_per_chunk: f64,
    /// Frames forwarded for one interior chunk, if any utterance has one.
    pub lc_interior_frames: Option<usize>,
    pub csc_interior_frames: Option<usize>,
    pub lc_total_frames: usize,
    pub csc_total_frames: usize,
    pub lc_improvement_db: f64,
    pub csc_improvement_db: f64,
}

fn interior_frames(net: &Network, utts: &[Utterance], method: Method, spec: &ChunkSpec) -> Result<Option<usize>> {
    use lcsep_core::streamer::{infer_csc, infer_lc};
    for u in utts {
        let inf = match method {
            Method::Lc => infer_lc(net, &u.prepared.features, spec)?,
            _ => infer_csc(net, &u.prepared.features, spec)?,
        };
        if inf.chunks.len() >= 3 {
            return Ok(Some(inf.frames_forwarded()[1]));
        }
    }
    Ok(None)
}

/// Sweeps `right` over `nr_list` with the configured left context and main
/// length. Tracing follows `st` for both chunked engines.
pub fn bench(net: &Network, cfg: &RunConfig, utts: &[Utterance], nr_list: &[usize], st: bool) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(nr_list.len());
    for &right in nr_list {
        let spec = ChunkSpec::new(cfg.chunk.left, cfg.chunk.main, right)?;
        let mut point = cfg.clone();
        point.chunk = spec;
        let measure = |method: Method| -> Result<(f64, usize, f64)> {
            let t0 = Instant::now();
            let mut chunks = 0;
            for u in utts {
                chunks += separate_features(net, &u.prepared.features, method, &spec, None)?.chunks;
            }
            let ms = t0.elapsed().as_secs_f64() * 1e3 / chunks.max(1) as f64;
            let seps = separate_all(net, &point, utts, method, st)?;
            let frames = seps.iter().map(|s| s.separation.frames_forwarded).sum();
            let improvement = score(utts, &seps)?.mean_improvement();
            Ok((ms, frames, improvement))
        };
        let (lc_ms, lc_frames, lc_imp) = measure(Method::Lc)?;
        let (csc_ms, csc_frames, csc_imp) = measure(Method::Csc)?;
        rows.push(BenchRow {
            right,
            latency_ms: latency_ms(&spec, cfg.stft.shift_ms),
            lc_ms_per_chunk: lc_ms,
            csc_ms_per_chunk: csc_ms,
            lc_interior_frames: interior_frames(net, utts, Method::Lc, &spec)?,
            csc_interior_frames: interior_frames(net, utts, Method::Csc, &spec)?,
            lc_total_frames: lc_frames,
            csc_total_frames: csc_frames,
            lc_improvement_db: lc_imp,
            csc_improvement_db: csc_imp,
        });
    }
    Ok(rows)
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from(
        "nr,latency_ms,lc_ms_per_chunk,csc_ms_per_chunk,lc_interior_frames,csc_interior_frames,\
         lc_total_frames,csc_total_frames,lc_si_sdr_improvement_db,csc_si_sdr_improvement_db\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.3},{:.3},{},{},{},{},{:.4},{:.4}",
            r.right,
            r.latency_ms,
            r.lc_ms_per_chunk,
            r.csc_ms_per_chunk,
            opt(r.lc_interior_frames),
            opt(r.csc_interior_frames),
            r.lc_total_frames,
            r.csc_total_frames,
            r.lc_improvement_db,
            r.csc_improvement_db
        );
    }
    s
}

/// Runs the sweep on the test split and writes `bench.csv` to
/// `cfg.paths.out`.
pub fn cmd_bench(cfg: &RunConfig, checkpoint: &Path, nr_list: &[usize], st: bool) -> Result<Vec<BenchRow>> {
    let net = Checkpoint::load(checkpoint)?.network()?;
    if net.config().input_dim != cfg.stft.bins() {
        return Err(CliError::Usage("checkpoint does not match the STFT bin count".into()));
    }
    let utts = load_split(cfg, &load_manifest(&cfg.paths.corpus)?, Split::Test)?;
    let rows = bench(&net, cfg, &utts, nr_list, st)?;
    std::fs::create_dir_all(&cfg.paths.out).map_err(|e| CliError::io(&cfg.paths.out, e))?;
    write_file(&cfg.paths.out.join("bench.csv"), &render_bench(&rows))?;
    Ok(rows)
}
