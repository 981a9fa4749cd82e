//! Scale-invariant SDR scoring with best-assignment matching.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::pitloss::Permutation;

/// Upper (and lower) bound on reported SI-SDR values, in dB.
pub const SDR_CAP_DB: f64 = 60.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `10 log10(|a r|^2 / |e - a r|^2)` with `a = <e, r> / |r|^2`, clamped to
/// `[-SDR_CAP_DB, SDR_CAP_DB]`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(invalid!("estimate has {} samples, reference {}", estimate.len(), reference.len()));
    }
    let ref_energy = dot(reference, reference);
    if !(ref_energy > 0.0) {
        return Err(invalid!("reference signal has no energy"));
    }
    let gain = dot(estimate, reference) / ref_energy;
    let target = gain * gain * ref_energy;
    let residual: f64 = estimate.iter().zip(reference).map(|(e, r)| (e - gain * r) * (e - gain * r)).sum();
    if residual <= target * 1e-6 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// Scores of one separated utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEval {
    /// `assignment.apply(k)` is the estimate matched to reference `k`.
    pub assignment: Permutation,
    /// SI-SDR of the matched estimate, per reference.
    pub si_sdr: Vec<f64>,
    /// SI-SDR of the unprocessed mixture, per reference.
    pub baseline: Vec<f64>,
}

impl PairEval {
    pub fn improvement(&self) -> Vec<f64> {
        self.si_sdr.iter().zip(&self.baseline).map(|(a, b)| a - b).collect()
    }

    pub fn mean_si_sdr(&self) -> f64 {
        mean(&self.si_sdr)
    }

    pub fn mean_improvement(&self) -> f64 {
        mean(&self.improvement())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Chooses the estimate-to-reference assignment with the highest mean SI-SDR
/// (ties go to the lexicographically smallest) and scores it against the
/// mixture baseline.
pub fn eval_pair(estimates: &[Vec<f64>], references: &[Vec<f64>], mixture: &[f64]) -> Result<PairEval> {
    if estimates.len() != references.len() || references.is_empty() {
        return Err(invalid!("{} estimates for {} references", estimates.len(), references.len()));
    }
    if references.len() > crate::pitloss::MAX_SOURCES {
        return Err(crate::Error::Unsupported(alloc::format!("{} sources", references.len())));
    }
    let scores: Vec<Vec<f64>> = references
        .iter()
        .map(|r| estimates.iter().map(|e| si_sdr(e, r)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut best: Option<(Permutation, f64)> = None;
    for perm in Permutation::all(references.len()) {
        let total: f64 = (0..references.len()).map(|k| scores[k][perm.apply(k)]).sum();
        if best.as_ref().is_none_or(|(_, b)| total > *b) {
            best = Some((perm, total));
        }
    }
    let (assignment, _) = best.expect("at least one assignment");
    let matched = (0..references.len()).map(|k| scores[k][assignment.apply(k)]).collect();
    let baseline = references.iter().map(|r| si_sdr(mixture, r)).collect::<Result<_>>()?;
    Ok(PairEval { assignment, si_sdr: matched, baseline })
}


#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    /// Free-form grouping label (for example the source families).
    pub condition: String,
    pub eval: PairEval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSummary {
    pub condition: String,
    pub count: usize,
    pub mean_si_sdr: f64,
    pub mean_improvement: f64,
}

/// Corpus-level SI-SDR report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn push(&mut self, row: EvalRow) {
        self.rows.push(row);
    }

    pub fn mean_improvement(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.eval.mean_improvement()).collect::<Vec<_>>())
    }

    pub fn mean_si_sdr(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.eval.mean_si_sdr()).collect::<Vec<_>>())
    }

    /// Per-condition means, sorted by condition label.
    pub fn by_condition(&self) -> Vec<ConditionSummary> {
        let mut groups: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(r.condition.as_str()).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(c, rows)| ConditionSummary {
                condition: c.into(),
                count: rows.len(),
                mean_si_sdr: mean(&rows.iter().map(|r| r.eval.mean_si_sdr()).collect::<Vec<_>>()),
                mean_improvement: mean(&rows.iter().map(|r| r.eval.mean_improvement()).collect::<Vec<_>>()),
            })
            .collect()
    }
}
