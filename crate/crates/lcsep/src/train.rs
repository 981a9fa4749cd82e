//! Training driver: minibatch loop, validation, LR decay, checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lcsep_core::model::{item_gradient, maybe_decay, validation_loss, Network, TrainItem, Trainer};
use lcsep_core::pipeline::PreparedUtterance;
use lcsep_core::{derive_seed, SeededRng};
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{load_manifest, load_split};
use crate::error::{CliError, Result};
use crate::manifest::Split;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainMode {
    /// Whole utterances, one assignment per utterance.
    Upit,
    /// Context-sensitive chunks, one assignment per chunk.
    Cpit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Shape of one minibatch. In chunk mode every chunk away from the
/// utterance edges spans exactly `left + main + right` frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchShape {
    pub epoch: usize,
    pub batch: usize,
    pub items: usize,
    pub full_span: usize,
    pub min_frames: usize,
    pub max_frames: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: Vec<EpochLog>,
    pub shapes: Vec<BatchShape>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn training_items(utts: &[PreparedUtterance], mode: TrainMode, cfg: &RunConfig) -> Result<Vec<TrainItem>> {
    match mode {
        TrainMode::Upit => Ok(utts.iter().map(PreparedUtterance::utterance_item).collect()),
        TrainMode::Cpit => {
            let mut items = Vec::new();
            for u in utts {
                items.extend(u.chunk_items(&cfg.chunk)?);
            }
            Ok(items)
        }
    }
}

/// Trains a fresh network. With `out`, writes `loss.csv`, `batches.csv`
/// and one checkpoint per epoch there.
pub fn train(
    cfg: &RunConfig,
    mode: TrainMode,
    train_utts: &[PreparedUtterance],
    valid_utts: &[PreparedUtterance],
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let items = training_items(train_utts, mode, cfg)?;
    if items.is_empty() {
        return Err(CliError::Data("no training material".into()));
    }
    let valid = training_items(valid_utts, mode, cfg)?;
    let batch_size = match mode {
        TrainMode::Upit => cfg.train.batch_units,
        TrainMode::Cpit => cfg.cpit.batch_chunks,
    };
    let span = cfg.chunk.span();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }

    let mut trainer = Trainer::new(Network::new(cfg.network.clone())?, &cfg.train)?;
    let mut log = Vec::new();
    let mut shapes = Vec::new();
    let mut checkpoints = Vec::new();
    let mut history = Vec::new();
    for epoch in 0..cfg.train.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        SeededRng::new(derive_seed(cfg.seed, &[0x7472_6169_6e, epoch as u64])).shuffle(&mut order);
        let mut total = 0.0;
        let batches: Vec<&[usize]> = order.chunks(batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            let where_ = || format!("epoch {epoch}, batch {b}");
            let seeds: Vec<u64> = (0..idx.len()).map(|i| trainer.dropout_seed(i)).collect();
            let net = &trainer.network;
            let grads: lcsep_core::Result<Vec<_>> = if cfg.parallel_batches {
                idx.par_iter().zip(&seeds).map(|(&i, &s)| item_gradient(net, &items[i], s)).collect()
            } else {
                idx.iter().zip(&seeds).map(|(&i, &s)| item_gradient(net, &items[i], s)).collect()
            };
            let grads = grads.map_err(|e| CliError::from(e).context(where_()))?;
            let report = trainer.apply(grads).map_err(|e| CliError::from(e).context(where_()))?;
            total += report.loss;
            if mode == TrainMode::Cpit {
                let lens: Vec<usize> = idx.iter().map(|&i| items[i].frames()).collect();
                shapes.push(BatchShape {
                    epoch,
                    batch: b,
                    items: lens.len(),
                    full_span: lens.iter().filter(|&&l| l == span).count(),
                    min_frames: *lens.iter().min().expect("batches are non-empty"),
                    max_frames: *lens.iter().max().expect("batches are non-empty"),
                });
            }
        }
        let valid_loss = if valid.is_empty() {
            None
        } else {
            let v = validation_loss(&trainer.network, &valid)
                .map_err(|e| CliError::from(e).context(format!("validation after epoch {epoch}")))?;
            history.push(v);
            Some(v)
        };
        log.push(EpochLog { epoch, train_loss: total / batches.len() as f64, valid_loss, lr: trainer.lr });
        trainer.lr = maybe_decay(&history, trainer.lr, &cfg.train);

        if let Some(dir) = out {
            let ck = Checkpoint {
                config: trainer.network.config().clone(),
                params: trainer.network.params().to_vec(),
                adam: trainer.optimizer.clone(),
                seed: cfg.seed,
                epoch: (epoch + 1) as u32,
                lr: trainer.lr,
            };
            let path = dir.join(format!("epoch_{:03}.ckpt", epoch + 1));
            ck.save(&path)?;
            checkpoints.push(path);
            write_file(&dir.join("loss.csv"), &render_loss_log(&log))?;
            if mode == TrainMode::Cpit {
                write_file(&dir.join("batches.csv"), &render_shapes(&shapes))?;
            }
        }
    }
    Ok(TrainOutcome { network: trainer.network, log, shapes, checkpoints })
}

pub fn render_loss_log(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,valid_loss,lr\n");
    for e in log {
        let valid = e.valid_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, valid, e.lr);
    }
    s
}

fn render_shapes(shapes: &[BatchShape]) -> String {
    let mut s = String::from("epoch,batch,items,full_span,min_frames,max_frames\n");
    for b in shapes {
        let _ = writeln!(s, "{},{},{},{},{},{}", b.epoch, b.batch, b.items, b.full_span, b.min_frames, b.max_frames);
    }
    s
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Loads the train and valid splits named by `cfg` and trains into
/// `cfg.paths.out`.
pub fn cmd_train(cfg: &RunConfig, mode: TrainMode) -> Result<TrainOutcome> {
    let manifest = load_manifest(&cfg.paths.corpus)?;
    let prepared = |split| -> Result<Vec<PreparedUtterance>> {
        Ok(load_split(cfg, &manifest, split)?.into_iter().map(|u| u.prepared).collect())
    };
    let (train_utts, valid_utts) = (prepared(Split::Train)?, prepared(Split::Valid)?);
    std::fs::create_dir_all(&cfg.paths.out).map_err(|e| CliError::io(&cfg.paths.out, e))?;
    write_file(&cfg.paths.out.join("config.toml"), &cfg.to_toml())?;
    train(cfg, mode, &train_utts, &valid_utts, Some(&cfg.paths.out))
}
