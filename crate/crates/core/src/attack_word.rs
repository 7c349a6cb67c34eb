//! Word-level attack: prompt the filler with masked inputs under a malicious
//! trigger, strip the trigger, and keep the fills that flip the victim.
//!
//! The victim is consulted exactly twice per instance: once on the original
//! text and once on all candidates in a single batch. There is no iterative
//! search against it.

use serde::{Deserialize, Serialize};

use crate::backends::{
    Classifier, CountingClassifier, LabelDistribution, MaskFiller, PerplexityScorer, SlotFill,
};
use crate::error::{Error, Result};
use crate::lexicon::AntonymLexicon;
use crate::prompting::{build_prompt, plan_masks, MaskPlan};
use crate::seeding::derive_seed_indexed;
use crate::task::{Instance, TaskSpec};
use crate::text::{tokenize, MASK_TOKEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordAttackConfig {
    pub prompts_per_instance: usize,
    pub mask_ratio: f64,
    pub topk_fill: usize,
    /// When off, candidates are emitted without any victim query.
    pub verify: bool,
    pub seed: u64,
}

impl Default for WordAttackConfig {
    fn default() -> Self {
        WordAttackConfig {
            prompts_per_instance: 50,
            mask_ratio: 0.15,
            topk_fill: 20,
            verify: true,
            seed: 0,
        }
    }
}

/// One filled-and-stripped text, before or after victim verification.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub text: String,
    pub fills: Vec<SlotFill>,
    pub plan: MaskPlan,
    pub ppl: Option<f64>,
    pub victim_pred: Option<LabelDistribution>,
}

impl Candidate {
    /// Word positions where the fill differs from the original token.
    pub fn edit_positions(&self, original_tokens: &[String]) -> Vec<usize> {
        self.plan
            .masked_positions
            .iter()
            .zip(&self.fills)
            .filter(|(pos, fill)| original_tokens[**pos] != fill.token)
            .map(|(pos, _)| *pos)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Success,
    Failed,
    SkippedMisclassified,
}

/// Outcome of attacking one instance, shared by every attacker in the
/// toolkit.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub instance_id: String,
    pub status: AttackStatus,
    pub adversarial_text: Option<String>,
    pub edit_positions: Vec<usize>,
    pub victim_queries: u64,
    pub candidates_tried: usize,
    /// Victim's label index on the original text, when it was consulted.
    pub pred_before: Option<usize>,
    /// Victim's label index on the final adversarial text.
    pub pred_after: Option<usize>,
    /// Perplexity of the final adversarial text, when the attack scored it.
    pub adversarial_ppl: Option<f64>,
    /// Populated only in no-victim mode, where nothing was verified and the
    /// caller needs the raw candidates for a transfer setting.
    pub unverified_candidates: Vec<Candidate>,
}

impl AttackResult {
    /// A result carrying only identity and status; callers fill in the rest.
    pub fn empty(instance_id: &str, status: AttackStatus) -> Self {
        AttackResult {
            instance_id: instance_id.to_string(),
            status,
            adversarial_text: None,
            edit_positions: Vec::new(),
            victim_queries: 0,
            candidates_tried: 0,
            pred_before: None,
            pred_after: None,
            adversarial_ppl: None,
            unverified_candidates: Vec::new(),
        }
    }
}

/// Accepts or rejects one slot fill against the original token at that slot.
/// Rejects empty fills, the mask marker itself, anything that is not a single
/// word-level token, and lexicon antonyms of the original.
pub fn filter_fill(original_token: &str, fill_token: &str, lexicon: &AntonymLexicon) -> bool {
    if fill_token.is_empty() || fill_token == MASK_TOKEN {
        return false;
    }
    match tokenize(fill_token) {
        Ok(tok) if tok.tokens.len() == 1 => {}
        _ => return false,
    }
    !lexicon.is_antonym(original_token, fill_token)
}

/// Builds one prompt per mask plan, fills each, filters and strips. Never
/// touches the victim. Candidates are deduplicated by text and the unchanged
/// original is dropped.
pub fn generate_candidates(
    inst: &Instance,
    task: &TaskSpec,
    filler: &dyn MaskFiller,
    lexicon: &AntonymLexicon,
    cfg: &WordAttackConfig,
) -> Result<Vec<Candidate>> {
    inst.validate(task)?;
    let original = tokenize(inst.attack_text(task))?;
    let plans = plan_masks(&inst.id, &original, cfg.mask_ratio, cfg.prompts_per_instance, cfg.seed)?;

    let mut seen = std::collections::BTreeSet::new();
    let original_text = crate::text::detokenize_tokens(&original.tokens)?;
    let mut candidates = Vec::new();
    for (plan_idx, plan) in plans.into_iter().enumerate() {
        let prompt = build_prompt(inst, &plan, task)?;
        let fill_seed = derive_seed_indexed(cfg.seed, &format!("fill:{}", inst.id), plan_idx as u64);
        let mut assignments =
            filler.fill_slots(&prompt.tokens.tokens, 1, cfg.topk_fill, fill_seed)?;
        let assignment = match assignments.pop() {
            Some(a) if a.len() == prompt.slot_count() => a,
            Some(a) => return Err(Error::LengthMismatch { left: a.len(), right: prompt.slot_count() }),
            None => continue,
        };
        let accepted = assignment
            .iter()
            .enumerate()
            .all(|(i, fill)| filter_fill(prompt.original_at_slot(i), &fill.token, lexicon));
        if !accepted {
            continue;
        }
        let fill_tokens: Vec<String> = assignment.iter().map(|f| f.token.clone()).collect();
        let text = prompt.strip_trigger(&fill_tokens)?;
        if text == original_text || !seen.insert(text.clone()) {
            continue;
        }
        candidates.push(Candidate { text, fills: assignment, plan, ppl: None, victim_pred: None });
    }
    Ok(candidates)
}

/// Among verified successes, picks the most fluent: minimum perplexity, ties
/// broken by fewer edits, then lexicographic text order.
pub fn select_best(
    mut successes: Vec<Candidate>,
    original_tokens: &[String],
    scorer: &dyn PerplexityScorer,
) -> Result<Candidate> {
    if successes.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    for cand in &mut successes {
        if cand.ppl.is_none() {
            cand.ppl = Some(scorer.perplexity(&cand.text)?);
        }
    }
    let key = |c: &Candidate| {
        (c.ppl.expect("scored above"), c.edit_positions(original_tokens).len(), c.text.clone())
    };
    successes
        .into_iter()
        .min_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite perplexities"))
        .ok_or(Error::EmptyCandidates)
}

/// Full word-level attack on one instance.
pub fn attack_word(
    inst: &Instance,
    task: &TaskSpec,
    victim: &dyn Classifier,
    filler: &dyn MaskFiller,
    scorer: &dyn PerplexityScorer,
    lexicon: &AntonymLexicon,
    cfg: &WordAttackConfig,
) -> Result<AttackResult> {
    inst.validate(task)?;
    let gold = task.label_index(&inst.gold_label).expect("validated label");
    let counter = CountingClassifier::new(victim);

    if !cfg.verify {
        let candidates = generate_candidates(inst, task, filler, lexicon, cfg)?;
        let mut result = AttackResult::empty(&inst.id, AttackStatus::Failed);
        result.candidates_tried = candidates.len();
        result.unverified_candidates = candidates;
        return Ok(result);
    }

    let original_pred = counter.classify(&inst.fields)?;
    if original_pred.argmax() != gold {
        let mut result = AttackResult::empty(&inst.id, AttackStatus::SkippedMisclassified);
        result.victim_queries = counter.queries();
        result.pred_before = Some(original_pred.argmax());
        return Ok(result);
    }

    let mut candidates = generate_candidates(inst, task, filler, lexicon, cfg)?;
    let tried = candidates.len();
    let batch: Vec<Vec<String>> =
        candidates.iter().map(|c| inst.with_attack_text(task, c.text.clone()).fields).collect();
    if !batch.is_empty() {
        let preds = counter.classify_batch(&batch)?;
        for (cand, pred) in candidates.iter_mut().zip(preds) {
            cand.victim_pred = Some(pred);
        }
    }

    let successes: Vec<Candidate> = candidates
        .into_iter()
        .filter(|c| c.victim_pred.as_ref().is_some_and(|p| p.argmax() != gold))
        .collect();

    if successes.is_empty() {
        let mut result = AttackResult::empty(&inst.id, AttackStatus::Failed);
        result.victim_queries = counter.queries();
        result.candidates_tried = tried;
        result.pred_before = Some(gold);
        return Ok(result);
    }

    let original_tokens = tokenize(inst.attack_text(task))?.tokens;
    let best = select_best(successes, &original_tokens, scorer)?;
    let mut result = AttackResult::empty(&inst.id, AttackStatus::Success);
    result.adversarial_text = Some(best.text.clone());
    result.edit_positions = best.edit_positions(&original_tokens);
    result.victim_queries = counter.queries();
    result.candidates_tried = tried;
    result.pred_before = Some(gold);
    result.pred_after = best.victim_pred.as_ref().map(|p| p.argmax());
    result.adversarial_ppl = best.ppl;
    Ok(result)
}
