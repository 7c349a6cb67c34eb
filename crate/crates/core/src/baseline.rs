//! Search-based comparison attacker: greedy word substitution driven by
//! word-importance ranking and a similarity lexicon.
//!
//! Unlike the prompt attack, this one iterates against the victim, so its
//! query count grows with the search: one query for the original, one per
//! deletable position, and one per substitution candidate tried.

use serde::{Deserialize, Serialize};

use crate::attack_word::{AttackResult, AttackStatus};
use crate::backends::{Classifier, CountingClassifier};
use crate::error::Result;
use crate::lexicon::SubstitutionLexicon;
use crate::task::{Instance, TaskSpec};
use crate::text::{detokenize_tokens, tokenize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Candidates tried per replaceable position, best-scored first.
    pub top_candidates: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { top_candidates: 5 }
    }
}

fn classify_tokens(
    inst: &Instance,
    task: &TaskSpec,
    victim: &dyn Classifier,
    tokens: &[String],
) -> Result<crate::backends::LabelDistribution> {
    let text = detokenize_tokens(tokens)?;
    victim.classify(&inst.with_attack_text(task, text).fields)
}

fn importance_order(
    inst: &Instance,
    task: &TaskSpec,
    victim: &dyn Classifier,
    tokens: &[String],
    gold: usize,
    gold_prob: f64,
) -> Result<Vec<usize>> {
    let n = tokens.len();
    if n == 1 {
        return Ok(vec![0]);
    }
    let mut drops = Vec::with_capacity(n);
    for pos in 0..n {
        let mut reduced = tokens.to_vec();
        reduced.remove(pos);
        let dist = classify_tokens(inst, task, victim, &reduced)?;
        drops.push(gold_prob - dist.prob(gold));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| drops[b].partial_cmp(&drops[a]).expect("finite probabilities").then(a.cmp(&b)));
    Ok(order)
}

/// Positions of the attack field ordered by how much deleting the word there
/// drops the victim's gold-label probability (largest drop first, ties by
/// position). Costs one victim query for the original plus one per deletion;
/// a single-token input is ranked without any deletion query.
pub fn rank_importance(inst: &Instance, task: &TaskSpec, victim: &dyn Classifier) -> Result<Vec<usize>> {
    inst.validate(task)?;
    let gold = task.label_index(&inst.gold_label).expect("validated label");
    let tokens = tokenize(inst.attack_text(task))?.tokens;
    let original = victim.classify(&inst.fields)?;
    importance_order(inst, task, victim, &tokens, gold, original.prob(gold))
}

/// Up to `k` best-scored substitutes for `word` from the lexicon.
pub fn substitution_candidates<'l>(
    word: &str,
    lexicon: &'l SubstitutionLexicon,
    k: usize,
) -> &'l [(String, f64)] {
    lexicon.top(word, k)
}

/// Greedy importance-ordered substitution attack on one instance.
pub fn attack_search(
    inst: &Instance,
    task: &TaskSpec,
    victim: &dyn Classifier,
    lexicon: &SubstitutionLexicon,
    cfg: &BaselineConfig,
) -> Result<AttackResult> {
    inst.validate(task)?;
    let gold = task.label_index(&inst.gold_label).expect("validated label");
    let counter = CountingClassifier::new(victim);

    let original_pred = counter.classify(&inst.fields)?;
    let pred_before = original_pred.argmax();
    if pred_before != gold {
        let mut result = AttackResult::empty(&inst.id, AttackStatus::SkippedMisclassified);
        result.victim_queries = counter.queries();
        result.pred_before = Some(pred_before);
        return Ok(result);
    }

    let mut tokens = tokenize(inst.attack_text(task))?.tokens;
    let order = importance_order(inst, task, &counter, &tokens, gold, original_pred.prob(gold))?;

    let mut gold_prob = original_pred.prob(gold);
    let mut edits: Vec<usize> = Vec::new();
    let mut tried = 0usize;
    for pos in order {
        let mut best: Option<(String, f64, crate::backends::LabelDistribution)> = None;
        for (cand, _score) in substitution_candidates(&tokens[pos], lexicon, cfg.top_candidates) {
            let mut trial = tokens.clone();
            trial[pos] = cand.clone();
            let dist = classify_tokens(inst, task, &counter, &trial)?;
            tried += 1;
            let p = dist.prob(gold);
            if best.as_ref().is_none_or(|(_, bp, _)| p < *bp) {
                best = Some((cand.clone(), p, dist));
            }
        }
        let Some((winner, p, dist)) = best else { continue };
        if p >= gold_prob {
            continue;
        }
        tokens[pos] = winner;
        gold_prob = p;
        edits.push(pos);
        if dist.argmax() != gold {
            edits.sort_unstable();
            let mut result = AttackResult::empty(&inst.id, AttackStatus::Success);
            result.adversarial_text = Some(detokenize_tokens(&tokens)?);
            result.edit_positions = edits;
            result.victim_queries = counter.queries();
            result.candidates_tried = tried;
            result.pred_before = Some(gold);
            result.pred_after = Some(dist.argmax());
            return Ok(result);
        }
    }

    let mut result = AttackResult::empty(&inst.id, AttackStatus::Failed);
    result.victim_queries = counter.queries();
    result.candidates_tried = tried;
    result.pred_before = Some(gold);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::KeywordClassifier;

    fn movie_classifier() -> KeywordClassifier {
        KeywordClassifier::new(&["good", "great", "excellent"], &["bad", "dull", "boring"])
    }

    fn single(text: &str, label: &str) -> Instance {
        Instance::new("b0", vec![text.to_string()], label)
    }

    fn plain_lexicon() -> SubstitutionLexicon {
        SubstitutionLexicon::from_entries([
            ("good", vec![("plain".to_string(), 0.9), ("fine".to_string(), 0.8)]),
            ("film", vec![("movie".to_string(), 0.95)]),
        ])
        .unwrap()
    }

    #[test]
    fn importance_puts_the_load_bearing_word_first() {
        let task = TaskSpec::sentiment();
        let inst = single("a good plain film", "positive");
        let victim = movie_classifier();
        let order = rank_importance(&inst, &task, &victim).unwrap();
        assert_eq!(order[0], 1);

        // Brute-force recount: deleting each token, position 1 must drop the
        // gold probability at least as much as every other deletion.
        let tokens = tokenize("a good plain film").unwrap().tokens;
        let gold_prob = victim.classify(&inst.fields).unwrap().prob(1);
        let mut drops = Vec::new();
        for pos in 0..tokens.len() {
            let mut t = tokens.clone();
            t.remove(pos);
            let text = detokenize_tokens(&t).unwrap();
            drops.push(gold_prob - victim.classify(&[text]).unwrap().prob(1));
        }
        assert!(drops.iter().all(|d| drops[1] >= *d));
    }

    #[test]
    fn equal_drops_keep_position_order() {
        let task = TaskSpec::sentiment();
        let inst = single("the very plain gray film", "positive");
        // No keywords at all: every deletion leaves the distribution at 0.5.
        let victim = movie_classifier();
        let order = rank_importance(&inst, &task, &victim).unwrap();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_token_rank_is_position_zero() {
        let task = TaskSpec::sentiment();
        let inst = single("good", "positive");
        let order = rank_importance(&inst, &task, &movie_classifier()).unwrap();
        assert_eq!(order, vec![0]);
    }

    #[test]
    fn greedy_search_flips_and_counts_queries_exactly() {
        let task = TaskSpec::sentiment();
        let inst = single("a good film", "positive");
        let result =
            attack_search(&inst, &task, &movie_classifier(), &plain_lexicon(), &BaselineConfig::default())
                .unwrap();
        assert_eq!(result.status, AttackStatus::Success);
        assert_eq!(result.edit_positions, vec![1]);
        assert_eq!(result.adversarial_text.as_deref(), Some("a plain film"));
        // 1 original + 3 deletions + candidates tried.
        assert_eq!(result.victim_queries, 1 + 3 + result.candidates_tried as u64);
    }

    #[test]
    fn empty_lexicon_costs_importance_queries_only() {
        let task = TaskSpec::sentiment();
        let inst = single("a good film", "positive");
        let empty = SubstitutionLexicon::default();
        let result =
            attack_search(&inst, &task, &movie_classifier(), &empty, &BaselineConfig::default()).unwrap();
        assert_eq!(result.status, AttackStatus::Failed);
        assert_eq!(result.candidates_tried, 0);
        assert_eq!(result.victim_queries, 1 + 3);
    }

    #[test]
    fn misclassified_original_short_circuits() {
        let task = TaskSpec::sentiment();
        let inst = single("a dull film", "positive");
        let result =
            attack_search(&inst, &task, &movie_classifier(), &plain_lexicon(), &BaselineConfig::default())
                .unwrap();
        assert_eq!(result.status, AttackStatus::SkippedMisclassified);
        assert_eq!(result.victim_queries, 1);
    }

    #[test]
    fn committed_substitutions_strictly_reduce_gold_probability() {
        let task = TaskSpec::sentiment();
        let inst = single("a good great film about good people", "positive");
        let victim = movie_classifier();
        let result =
            attack_search(&inst, &task, &victim, &plain_lexicon(), &BaselineConfig::default()).unwrap();
        if let Some(adv) = &result.adversarial_text {
            // Success implies the final text is predicted non-gold.
            assert_ne!(victim.classify(&[adv.clone()]).unwrap().argmax(), 1);
            assert!(!result.edit_positions.is_empty());
        }
        // Edits only ever touch ranked positions that hold lexicon words.
        let tokens = tokenize(inst.attack_text(&task)).unwrap().tokens;
        for &pos in &result.edit_positions {
            assert!(["good", "great", "film"].contains(&tokens[pos].as_str()));
        }
    }
}
