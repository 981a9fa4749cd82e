//! Separation with the whole-utterance, context-sensitive or
//! latency-controlled engine, optionally with stream tracing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lcsep_core::chunker::{plan_chunks, ChunkMethod, ChunkSpec};
use lcsep_core::dsp::{MaskSet, Stft};
use lcsep_core::model::Network;
use lcsep_core::streamer::{infer_csc, infer_utterance, StreamSession};
use lcsep_core::tracer::{trace_utterance, TraceConfig, TraceDecision, Verdict};
use lcsep_core::Matrix;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{load_manifest, load_split, Utterance};
use crate::error::{CliError, Result};
use crate::manifest::Split;
use crate::train::write_file;
use crate::wav::{write_wav, SampleFormat, Wav};

pub const ESTIMATES_FILE: &str = "estimates.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Whole utterance at once.
    Utt,
    /// Context-sensitive chunks, each forwarded from zero state.
    Csc,
    /// Latency-controlled chunks with carried forward state.
    Lc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Utt => "utt",
            Method::Csc => "csc",
            Method::Lc => "lc",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub masks: MaskSet,
    /// One entry per chunk boundary when tracing ran, otherwise empty.
    pub decisions: Vec<TraceDecision>,
    pub chunks: usize,
    pub frames_forwarded: usize,
    pub traced: bool,
}

impl Separation {
    pub fn swaps(&self) -> usize {
        self.decisions.iter().filter(|d| d.verdict.is_swap()).count()
    }
}

/// Tracing is pointless for latency-controlled chunks without right
/// context: consecutive chunks share no frames.
pub fn tracing_applies(method: Method, st: bool, spec: &ChunkSpec) -> bool {
    st && match method {
        Method::Utt => false,
        Method::Csc => true,
        Method::Lc => spec.right > 0,
    }
}

/// Separates one utterance from its magnitude features.
pub fn separate_features(
    net: &Network,
    features: &Matrix,
    method: Method,
    spec: &ChunkSpec,
    trace: Option<&TraceConfig>,
) -> Result<Separation> {
    let trace = trace.filter(|_| tracing_applies(method, true, spec));
    match method {
        Method::Utt => Ok(Separation {
            masks: infer_utterance(net, features)?,
            decisions: Vec::new(),
            chunks: 1,
            frames_forwarded: features.rows(),
            traced: false,
        }),
        Method::Csc => {
            let inf = infer_csc(net, features, spec)?;
            let decisions = match trace {
                Some(t) => trace_utterance(&inf.chunks, features, ChunkMethod::Csc, t)?,
                None => Vec::new(),
            };
            let verdicts: Vec<Verdict> = decisions.iter().map(|d| d.verdict.clone()).collect();
            Ok(Separation {
                masks: inf.splice(&verdicts)?,
                chunks: inf.chunks.len(),
                frames_forwarded: inf.frames_forwarded().iter().sum(),
                traced: trace.is_some(),
                decisions,
            })
        }
        Method::Lc => {
            let plan = plan_chunks(features.rows(), spec)?;
            let mut session = StreamSession::new(net, *spec, trace.copied());
            let mut mains = Vec::with_capacity(plan.len());
            let mut decisions = Vec::new();
            for view in plan.chunks() {
                let out = session.push(view, &features.slice_rows(view.lc_window()))?;
                mains.push(out.main);
                decisions.extend(out.decision);
            }
            Ok(Separation {
                masks: MaskSet::concat(&mains)?,
                chunks: plan.len(),
                frames_forwarded: session.frames_forwarded(),
                traced: trace.is_some(),
                decisions,
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeparatedUtterance {
    pub id: String,
    pub condition: String,
    pub separation: Separation,
    pub estimates: Vec<Vec<f64>>,
}

pub fn separate_all(
    net: &Network,
    cfg: &RunConfig,
    utts: &[Utterance],
    method: Method,
    st: bool,
) -> Result<Vec<SeparatedUtterance>> {
    let stft = Stft::new(&cfg.stft)?;
    let trace = st.then_some(&cfg.trace);
    utts.par_iter()
        .map(|u| {
            let sep = separate_features(net, &u.prepared.features, method, &cfg.chunk, trace)
                .map_err(|e| e.context(&u.record.id))?;
            let estimates = u.prepared.reconstruct(&stft, &sep.masks)?;
            Ok(SeparatedUtterance {
                id: u.record.id.clone(),
                condition: u.record.condition.clone(),
                separation: sep,
                estimates,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SeparateSummary {
    pub utterances: usize,
    pub boundaries: usize,
    pub swaps: usize,
    pub warning: Option<String>,
}

/// Separates every record of `split` with the checkpointed model and writes
/// estimates, `report.csv`, `boundaries.csv` and `estimates.tsv` to
/// `cfg.paths.out`.
pub fn cmd_separate(
    cfg: &RunConfig,
    checkpoint: &Path,
    split: Split,
    method: Method,
    st: bool,
) -> Result<SeparateSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.config.input_dim != cfg.stft.bins() {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} bins but the STFT yields {}",
            ck.config.input_dim,
            cfg.stft.bins()
        )));
    }
    let net = ck.network()?;
    let warning = (st && method == Method::Lc && cfg.chunk.right == 0)
        .then(|| "latency-controlled chunks without right context share no frames; tracing skipped".to_string());
    let utts = load_split(cfg, &load_manifest(&cfg.paths.corpus)?, split)?;
    let results = separate_all(&net, cfg, &utts, method, st)?;

    let out = &cfg.paths.out;
    let wav_dir = out.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| CliError::io(&wav_dir, e))?;
    let mut report = String::from("id,condition,method,st,frames,chunks,frames_forwarded,boundaries,swaps\n");
    let mut bounds = String::from("id,boundary,overlap_frames,e1,e2,verdict\n");
    let mut index = String::new();
    for r in &results {
        let mut paths = Vec::new();
        for (s, est) in r.estimates.iter().enumerate() {
            let rel = PathBuf::from("wav").join(format!("{}_est{}.wav", r.id, s + 1));
            let wav = Wav { sample_rate: cfg.stft.sample_rate, format: SampleFormat::Float32, samples: est.clone() };
            write_wav(out.join(&rel), &wav)?;
            paths.push(rel.display().to_string());
        }
        let _ = writeln!(index, "{}\t{}", r.id, paths.join(","));
        let sep = &r.separation;
        let _ = writeln!(
            report,
            "{},{},{},{},{},{},{},{},{}",
            r.id,
            r.condition,
            method.name(),
            sep.traced,
            sep.masks.frames(),
            sep.chunks,
            sep.frames_forwarded,
            sep.decisions.len(),
            sep.swaps()
        );
        for (b, d) in sep.decisions.iter().enumerate() {
            let verdict = match &d.verdict {
                Verdict::Keep => "keep".to_string(),
                Verdict::Swap(p) => {
                    let m: Vec<String> = p.mapping().iter().map(|x| x.to_string()).collect();
                    format!("swap:{}", m.join(" "))
                }
            };
            let _ = writeln!(bounds, "{},{},{},{},{},{}", r.id, b + 1, d.overlap_frames, d.e1, d.e2, verdict);
        }
    }
    write_file(&out.join("report.csv"), &report)?;
    write_file(&out.join("boundaries.csv"), &bounds)?;
    write_file(&out.join(ESTIMATES_FILE), &index)?;
    Ok(SeparateSummary {
        utterances: results.len(),
        boundaries: results.iter().map(|r| r.separation.decisions.len()).sum(),
        swaps: results.iter().map(|r| r.separation.swaps()).sum(),
        warning,
    })
}
