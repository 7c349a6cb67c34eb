//! Sentence-level attack: extend the input with a natural continuation, then
//! run the word-level attack over the whole extended text.
//!
//! The insertion uses the comma trick: the final stop mark becomes a comma so
//! the language model continues the sentence instead of starting a new one.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::attack_word::{attack_word, AttackResult, WordAttackConfig};
use crate::backends::{Classifier, MaskFiller, PerplexityScorer, TextContinuer};
use crate::error::{Error, Result};
use crate::lexicon::AntonymLexicon;
use crate::seeding::derive_seed;
use crate::task::{Instance, TaskKind, TaskSpec};
use crate::text::{detokenize_tokens, is_stop_mark, tokenize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentenceAttackConfig {
    /// Token budget for the continuation. Zero skips insertion entirely.
    pub max_new_tokens: usize,
    /// Tokens that must accumulate before a stop mark may end the
    /// continuation.
    pub min_tokens: usize,
}

impl Default for SentenceAttackConfig {
    fn default() -> Self {
        SentenceAttackConfig { max_new_tokens: 25, min_tokens: 5 }
    }
}

/// The extended text x̃ and where its two parts live.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionResult {
    pub extended_text: String,
    pub original_span: Range<usize>,
    pub inserted_span: Range<usize>,
}

/// Swaps the final stop mark for a comma (appending one when the text ends
/// bare) and appends a language-model continuation that ends with a stop
/// mark. Never queries a victim.
pub fn insert_sentence(
    text: &str,
    continuer: &dyn TextContinuer,
    cfg: &SentenceAttackConfig,
    seed: u64,
) -> Result<InsertionResult> {
    let mut tokens = tokenize(text)?.tokens;
    match tokens.last() {
        Some(last) if is_stop_mark(last) => {
            let end = tokens.len() - 1;
            tokens[end] = ",".to_string();
        }
        _ => tokens.push(",".to_string()),
    }
    let n = tokens.len();
    let prefix = detokenize_tokens(&tokens)?;

    if cfg.max_new_tokens == 0 {
        return Ok(InsertionResult {
            extended_text: prefix,
            original_span: 0..n,
            inserted_span: n..n,
        });
    }

    let continuation = continuer.continue_text(&prefix, cfg.max_new_tokens, seed)?;
    let mut inserted = tokenize(&continuation)?.tokens;
    if let Some(cut) = inserted
        .iter()
        .enumerate()
        .position(|(i, t)| i + 1 >= cfg.min_tokens && is_stop_mark(t))
    {
        inserted.truncate(cut + 1);
    }
    if !inserted.last().is_some_and(|t| is_stop_mark(t)) {
        inserted.push(".".to_string());
    }

    tokens.extend(inserted.iter().cloned());
    Ok(InsertionResult {
        extended_text: detokenize_tokens(&tokens)?,
        original_span: 0..n,
        inserted_span: n..tokens.len(),
    })
}

/// Sentence-level attack on one instance: insert, then attack every word
/// position of the extended text.
#[allow(clippy::too_many_arguments)]
pub fn attack_sentence(
    inst: &Instance,
    task: &TaskSpec,
    victim: &dyn Classifier,
    continuer: &dyn TextContinuer,
    filler: &dyn MaskFiller,
    scorer: &dyn PerplexityScorer,
    lexicon: &AntonymLexicon,
    word_cfg: &WordAttackConfig,
    sentence_cfg: &SentenceAttackConfig,
) -> Result<AttackResult> {
    if task.kind != TaskKind::SingleText {
        return Err(Error::Domain("sentence-level attack requires a single-text task".into()));
    }
    inst.validate(task)?;
    let insertion = insert_sentence(
        inst.attack_text(task),
        continuer,
        sentence_cfg,
        derive_seed(word_cfg.seed, &format!("insert:{}", inst.id)),
    )?;
    let extended = inst.with_attack_text(task, insertion.extended_text);
    attack_word(&extended, task, victim, filler, scorer, lexicon, word_cfg)
}
