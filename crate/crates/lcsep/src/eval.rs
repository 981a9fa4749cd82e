//! SI-SDR scoring of separated estimates against the corpus references.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lcsep_core::evalkit::{eval_pair, EvalReport, EvalRow};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::load_record;
use crate::data::{load_manifest, Utterance};
use crate::error::{CliError, Result};
use crate::separate::{SeparatedUtterance, ESTIMATES_FILE};
use crate::train::write_file;
use crate::wav::read_wav;

/// Scores in-memory separations; `utts` and `separated` must align.
pub fn score(utts: &[Utterance], separated: &[SeparatedUtterance]) -> Result<EvalReport> {
    if utts.len() != separated.len() {
        return Err(CliError::Data("utterance and separation counts differ".into()));
    }
    let rows = utts
        .par_iter()
        .zip(separated)
        .map(|(u, s)| {
            let eval = eval_pair(&s.estimates, &u.audio.sources, &u.audio.mixture)
                .map_err(|e| CliError::from(e).context(&u.record.id))?;
            Ok(EvalRow { id: u.record.id.clone(), condition: u.record.condition.clone(), eval })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(";")
}

pub fn render_rows(report: &EvalReport) -> String {
    let mut s = String::from("id,condition,assignment,si_sdr_db,baseline_db,improvement_db\n");
    for r in &report.rows {
        let a: Vec<String> = r.eval.assignment.mapping().iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.4}",
            r.id,
            r.condition,
            a.join(" "),
            join(&r.eval.si_sdr),
            join(&r.eval.baseline),
            r.eval.mean_improvement()
        );
    }
    s
}

pub fn render_summary(report: &EvalReport) -> String {
    let mut s = String::from("condition,count,mean_si_sdr_db,mean_improvement_db\n");
    for c in report.by_condition() {
        let _ = writeln!(s, "{},{},{:.4},{:.4}", c.condition, c.count, c.mean_si_sdr, c.mean_improvement);
    }
    let _ = writeln!(s, "all,{},{:.4},{:.4}", report.rows.len(), report.mean_si_sdr(), report.mean_improvement());
    s
}

/// Reads `estimates.tsv` from `separated`, scores each entry against its
/// corpus record, and writes `eval.csv` and `summary.csv` to `cfg.paths.out`.
pub fn cmd_eval(cfg: &RunConfig, separated: &Path) -> Result<EvalReport> {
    let manifest = load_manifest(&cfg.paths.corpus)?;
    let by_id: HashMap<&str, _> = manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let index_path = separated.join(ESTIMATES_FILE);
    let index = std::fs::read_to_string(&index_path).map_err(|e| CliError::io(&index_path, e))?;
    let mut entries = Vec::new();
    let mut offset = 0u64;
    for line in index.split_inclusive('\n') {
        let here = offset;
        offset += line.len() as u64;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (id, paths) = line.split_once('\t').ok_or_else(|| CliError::format(&index_path, here, "expected id<TAB>paths"))?;
        let record = *by_id
            .get(id)
            .ok_or_else(|| CliError::format(&index_path, here, format!("{id} is not in the corpus manifest")))?;
        let paths: Vec<PathBuf> = paths.split(',').map(PathBuf::from).collect();
        entries.push((record, paths));
    }
    let rows = entries
        .par_iter()
        .map(|(record, paths)| {
            let audio = load_record(&cfg.paths.corpus, record)?;
            let estimates =
                paths.iter().map(|p| Ok(read_wav(separated.join(p))?.samples)).collect::<Result<Vec<_>>>()?;
            let eval = eval_pair(&estimates, &audio.sources, &audio.mixture)
                .map_err(|e| CliError::from(e).context(&record.id))?;
            Ok(EvalRow { id: record.id.clone(), condition: record.condition.clone(), eval })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport { rows };
    std::fs::create_dir_all(&cfg.paths.out).map_err(|e| CliError::io(&cfg.paths.out, e))?;
    write_file(&cfg.paths.out.join("eval.csv"), &render_rows(&report))?;
    write_file(&cfg.paths.out.join("summary.csv"), &render_summary(&report))?;
    Ok(report)
}
