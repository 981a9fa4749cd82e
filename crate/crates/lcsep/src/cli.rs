use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{cmd_bench, render_bench, DEFAULT_NR_LIST};
use crate::config::{Overrides, RunConfig};
use crate::corpus::{build_corpus, corpus_digest};
use crate::error::Result;
use crate::eval::{cmd_eval, render_summary};
use crate::manifest::Split;
use crate::separate::{cmd_separate, Method};
use crate::train::{cmd_train, TrainMode};

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; also seeds network initialisation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Corpus directory (holds manifest.tsv).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChunkFlags {
    /// Left context frames.
    #[arg(long)]
    nl: Option<usize>,
    /// Main frames per chunk.
    #[arg(long)]
    n: Option<usize>,
    /// Right context frames.
    #[arg(long)]
    nr: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus (written to --out or the configured corpus dir).
    Mix,
    /// Train a model with utterance- or chunk-level permutation-invariant loss.
    Train {
        #[arg(long, value_enum, default_value = "upit")]
        mode: TrainMode,
        /// Number of passes over the training split.
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        chunk: ChunkFlags,
    },
    /// Separate a corpus split with a trained checkpoint.
    Separate {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "lc")]
        method: Method,
        /// Trace output streams across chunk boundaries.
        #[arg(long)]
        st: bool,
        /// Tracing hysteresis; swap only when the kept assignment costs alpha times more.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        chunk: ChunkFlags,
    },
    /// Score separated estimates (a `separate` output directory).
    Eval {
        /// Output directory of a `separate` run.
        #[arg(long)]
        separated: PathBuf,
    },
    /// Sweep right-context lengths on the test split.
    Bench {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated right-context lengths.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NR_LIST.to_vec())]
        nr_list: Vec<usize>,
        /// Trace output streams across chunk boundaries.
        #[arg(long)]
        st: bool,
        /// Tracing hysteresis; swap only when the kept assignment costs alpha times more.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        chunk: ChunkFlags,
    },
}

#[derive(Debug, Parser)]
#[command(name = "lcsep", version, about = "Two-talker mask separation with latency-controlled BLSTMs")]
struct Root {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn resolve(common: &Common, mut ov: Overrides) -> Result<RunConfig> {
    ov.seed = common.seed;
    ov.corpus = common.corpus.clone();
    ov.out = common.out.clone();
    RunConfig::resolve(common.config.as_deref(), &ov)
}

fn with_chunk(ov: Overrides, c: &ChunkFlags) -> Overrides {
    Overrides { left: c.nl, main: c.n, right: c.nr, ..ov }
}

fn run(root: Root) -> Result<()> {
    let common = &root.common;
    match root.command {
        Command::Mix => {
            let mut cfg = resolve(common, Overrides::default())?;
            if let Some(out) = &common.out {
                cfg.paths.corpus = out.clone();
            }
            let manifest = build_corpus(&cfg.corpus, cfg.seed, &cfg.paths.corpus)?;
            for split in Split::ALL {
                println!("{split}: {} mixtures", manifest.split(split).count());
            }
            println!("corpus {} sha256 {}", cfg.paths.corpus.display(), corpus_digest(&cfg.paths.corpus)?);
        }
        Command::Train { mode, epochs, chunk } => {
            let ov = with_chunk(Overrides { epochs, ..Overrides::default() }, &chunk);
            let cfg = resolve(common, ov)?;
            let outcome = cmd_train(&cfg, mode)?;
            for e in &outcome.log {
                let v = e.valid_loss.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into());
                println!("epoch {} train {:.5} valid {} lr {}", e.epoch, e.train_loss, v, e.lr);
            }
            if let Some(last) = outcome.checkpoints.last() {
                println!("checkpoint {}", last.display());
            }
        }
        Command::Separate { checkpoint, method, st, alpha, split, chunk } => {
            let cfg = resolve(common, with_chunk(Overrides { alpha, ..Overrides::default() }, &chunk))?;
            let s = cmd_separate(&cfg, &checkpoint, split, method, st)?;
            if let Some(w) = &s.warning {
                eprintln!("warning: {w}");
            }
            println!("{} utterances, {} boundaries traced, {} swaps", s.utterances, s.boundaries, s.swaps);
        }
        Command::Eval { separated } => {
            let cfg = resolve(common, Overrides::default())?;
            print!("{}", render_summary(&cmd_eval(&cfg, &separated)?));
        }
        Command::Bench { checkpoint, nr_list, st, alpha, chunk } => {
            let cfg = resolve(common, with_chunk(Overrides { alpha, ..Overrides::default() }, &chunk))?;
            print!("{}", render_bench(&cmd_bench(&cfg, &checkpoint, &nr_list, st)?));
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let root = match Root::try_parse_from(args) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(root) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
