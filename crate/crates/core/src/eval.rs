//! Metrics and experiment orchestration.
//!
//! Success rate (Suc) is computed over attacked instances only; instances the
//! victim already misclassifies are skipped and excluded from the
//! denominator. Robustness (Rob) and clean accuracy (Acc) are computed over
//! the whole sample, so the identity Rob = Acc · (1 − Suc/100) holds exactly
//! before any rounding. Perplexity (PPL) averages over successful adversarial
//! texts only, and Dis measures how many of this toolkit's successes the
//! search baseline misses.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_word::{AttackResult, AttackStatus};
use crate::backends::PerplexityScorer;
use crate::error::{Error, Result};
use crate::task::{Instance, TaskSpec};

/// Half-up rounding to two decimals for non-negative report values.
pub fn round2(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    (x * 100.0 + 0.5).floor() / 100.0
}

/// Attack success rate in percent over attacked (non-skipped) instances.
pub fn compute_suc(results: &[AttackResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let successes = results.iter().filter(|r| r.status == AttackStatus::Success).count();
    let failures = results.iter().filter(|r| r.status == AttackStatus::Failed).count();
    let attacked = successes + failures;
    if attacked == 0 {
        return Err(Error::EmptyAfterSkip);
    }
    Ok(100.0 * successes as f64 / attacked as f64)
}

/// Arithmetic mean of per-text perplexities.
pub fn compute_ppl(texts: &[String], scorer: &dyn PerplexityScorer) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for text in texts {
        total += scorer.perplexity(text)?;
    }
    Ok(total / texts.len() as f64)
}

/// Share of this toolkit's successes that the baseline attacker does not
/// also achieve, in percent. Both result sets must cover the same ids.
pub fn compute_dis(pat: &[AttackResult], baseline: &[AttackResult]) -> Result<f64> {
    let ids = |rs: &[AttackResult]| {
        rs.iter().map(|r| r.instance_id.clone()).collect::<std::collections::BTreeSet<_>>()
    };
    if ids(pat) != ids(baseline) {
        return Err(Error::Domain("result sets cover different instance ids".into()));
    }
    let baseline_success: std::collections::BTreeSet<&str> = baseline
        .iter()
        .filter(|r| r.status == AttackStatus::Success)
        .map(|r| r.instance_id.as_str())
        .collect();
    let pat_successes: Vec<&str> = pat
        .iter()
        .filter(|r| r.status == AttackStatus::Success)
        .map(|r| r.instance_id.as_str())
        .collect();
    if pat_successes.is_empty() {
        return Err(Error::ZeroDenominator("no successful attacks to compare".into()));
    }
    let exclusive = pat_successes.iter().filter(|id| !baseline_success.contains(**id)).count();
    Ok(100.0 * exclusive as f64 / pat_successes.len() as f64)
}

/// Clean accuracy and robustness accuracy in percent over the full sample.
pub fn compute_acc_rob(results: &[AttackResult]) -> Result<(f64, f64)> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = results.len() as f64;
    let correct = results.iter().filter(|r| r.status != AttackStatus::SkippedMisclassified).count();
    let successes = results.iter().filter(|r| r.status == AttackStatus::Success).count();
    Ok((100.0 * correct as f64 / n, 100.0 * (correct - successes) as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_sampled: usize,
    pub n_correct: usize,
    pub n_attacked: usize,
    pub n_success: usize,
    pub n_skipped: usize,
}

/// The paper-style metric block, percentages rounded half-up to two
/// decimals, raw counts kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub suc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ppl_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dis: Option<f64>,
    pub acc: f64,
    pub rob: f64,
    pub counts: Counts,
}

impl MetricsReport {
    /// Builds the report from per-instance results, with the PPL mean and
    /// Dis computed (or not) by the caller.
    pub fn from_results(
        results: &[AttackResult],
        ppl_mean: Option<f64>,
        dis: Option<f64>,
    ) -> Result<Self> {
        let suc = compute_suc(results)?;
        let (acc, rob) = compute_acc_rob(results)?;
        let n_success = results.iter().filter(|r| r.status == AttackStatus::Success).count();
        let n_skipped =
            results.iter().filter(|r| r.status == AttackStatus::SkippedMisclassified).count();
        let n_correct = results.len() - n_skipped;
        Ok(MetricsReport {
            suc: round2(suc),
            ppl_mean: ppl_mean.map(round2),
            dis: dis.map(round2),
            acc: round2(acc),
            rob: round2(rob),
            counts: Counts {
                n_sampled: results.len(),
                n_correct,
                n_attacked: n_correct,
                n_success,
                n_skipped,
            },
        })
    }
}

/// One persisted line of an experiment's results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub status: AttackStatus,
    pub original: String,
    pub adversarial: Option<String>,
    pub gold: String,
    pub pred_before: Option<String>,
    pub pred_after: Option<String>,
    pub queries: u64,
    pub edits: Vec<usize>,
    pub ppl: Option<f64>,
}

impl InstanceRecord {
    pub fn from_result(inst: &Instance, task: &TaskSpec, result: &AttackResult) -> Self {
        let label = |idx: Option<usize>| idx.and_then(|i| task.labels.get(i).cloned());
        InstanceRecord {
            id: inst.id.clone(),
            status: result.status,
            original: inst.attack_text(task).to_string(),
            adversarial: result.adversarial_text.clone(),
            gold: inst.gold_label.clone(),
            pred_before: label(result.pred_before),
            pred_after: label(result.pred_after),
            queries: result.victim_queries,
            edits: result.edit_positions.clone(),
            ppl: result.adversarial_ppl,
        }
    }
}

/// Records plus the report derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub records: Vec<InstanceRecord>,
}

/// Draws `n` instances without replacement (the whole pool when it is
/// smaller), deterministically for a fixed seed.
pub fn sample_instances(pool: &[Instance], n: usize, seed: u64) -> Result<Vec<Instance>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    if pool.is_empty() {
        return Err(Error::EmptyInput);
    }
    let take = n.min(pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..take {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(idx[..take].iter().map(|&i| pool[i].clone()).collect())
}

/// Runs `attack` over the sample in parallel, scores successful texts that
/// the attacker left unscored, and folds everything into records plus a
/// report. Per-instance attack errors abort the run; scoring errors only
/// leave that record's `ppl` empty.
pub fn run_attack_experiment<F>(
    sample: &[Instance],
    task: &TaskSpec,
    attack: F,
    scorer: &dyn PerplexityScorer,
) -> Result<ExperimentOutput>
where
    F: Fn(&Instance) -> Result<AttackResult> + Sync,
{
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let results: Vec<AttackResult> =
        sample.par_iter().map(|inst| attack(inst)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(sample.len());
    for (inst, result) in sample.iter().zip(&results) {
        let mut record = InstanceRecord::from_result(inst, task, result);
        if record.ppl.is_none() && result.status == AttackStatus::Success {
            if let Some(text) = &result.adversarial_text {
                record.ppl = scorer.perplexity(text).ok();
            }
        }
        records.push(record);
    }

    let success_ppls: Vec<f64> = records
        .iter()
        .filter(|r| r.status == AttackStatus::Success)
        .filter_map(|r| r.ppl)
        .collect();
    let ppl_mean = if success_ppls.is_empty() {
        None
    } else {
        Some(success_ppls.iter().sum::<f64>() / success_ppls.len() as f64)
    };

    let report = MetricsReport::from_results(&results, ppl_mean, None)?;
    Ok(ExperimentOutput { report, records })
}
