//! Deterministic stand-in backends for tests and benches.
//!
//! Each fixture nails down one behavior exactly (a known distribution, a
//! scripted fill, a lookup table) so that attack logic, query accounting and
//! metric arithmetic can be verified against hand computations.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::backends::{
    Classifier, FillAssignment, LabelDistribution, MaskFiller, PerplexityScorer, SentenceEncoder,
    SlotFill, TextContinuer,
};
use crate::error::{Error, Result};
use crate::text::{detokenize_tokens, tokenize, MASK_TOKEN};

/// Classifier that always returns the same distribution.
pub struct FixedClassifier {
    pub probs: Vec<f64>,
}

impl Classifier for FixedClassifier {
    fn num_labels(&self) -> usize {
        self.probs.len()
    }

    fn classify(&self, fields: &[String]) -> Result<LabelDistribution> {
        if fields.is_empty() {
            return Err(Error::EmptyInput);
        }
        LabelDistribution::new(self.probs.clone())
    }
}

/// Binary sentiment classifier driven by keyword counts: the positive
/// probability is a logistic function of (positive hits − negative hits).
/// Label order is [negative, positive].
pub struct KeywordClassifier {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl KeywordClassifier {
    pub fn new(positive: &[&str], negative: &[&str]) -> Self {
        KeywordClassifier {
            positive: positive.iter().map(|w| w.to_lowercase()).collect(),
            negative: negative.iter().map(|w| w.to_lowercase()).collect(),
        }
    }
}

impl Classifier for KeywordClassifier {
    fn num_labels(&self) -> usize {
        2
    }

    fn classify(&self, fields: &[String]) -> Result<LabelDistribution> {
        if fields.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut diff = 0i64;
        for field in fields {
            for tok in tokenize(field)?.tokens {
                let tok = tok.to_lowercase();
                if self.positive.contains(&tok) {
                    diff += 1;
                } else if self.negative.contains(&tok) {
                    diff -= 1;
                }
            }
        }
        let p_pos = 1.0 / (1.0 + (-(diff as f64)).exp());
        LabelDistribution::new(vec![1.0 - p_pos, p_pos])
    }
}

/// Filler that walks its token list: sample `s` under seed `q` puts
/// `tokens[(q + s) % len]` into every slot, so distinct seeds (or samples)
/// reach distinct scripted tokens while staying fully deterministic.
pub struct ScriptedFiller {
    tokens: Vec<String>,
}

impl ScriptedFiller {
    pub fn cycling<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        assert!(!tokens.is_empty(), "scripted filler needs at least one token");
        ScriptedFiller { tokens }
    }
}

impl MaskFiller for ScriptedFiller {
    fn fill_slots(
        &self,
        tokens: &[String],
        n_samples: usize,
        _topk: usize,
        seed: u64,
    ) -> Result<Vec<FillAssignment>> {
        let slots = tokens.iter().filter(|t| *t == MASK_TOKEN).count();
        if slots == 0 {
            return Err(Error::NoSlots);
        }
        let base = (seed % self.tokens.len() as u64) as usize;
        Ok((0..n_samples)
            .map(|s| {
                let token = self.tokens[(base + s) % self.tokens.len()].clone();
                (0..slots)
                    .map(|slot_index| SlotFill { slot_index, token: token.clone(), score: -1.0 })
                    .collect()
            })
            .collect())
    }
}

/// Counts `fill_slots` calls going through to the wrapped filler.
pub struct CountingFiller<'a> {
    inner: &'a dyn MaskFiller,
    count: AtomicU64,
}

impl<'a> CountingFiller<'a> {
    pub fn new(inner: &'a dyn MaskFiller) -> Self {
        CountingFiller { inner, count: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl MaskFiller for CountingFiller<'_> {
    fn fill_slots(
        &self,
        tokens: &[String],
        n_samples: usize,
        topk: usize,
        seed: u64,
    ) -> Result<Vec<FillAssignment>> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.fill_slots(tokens, n_samples, topk, seed)
    }
}

/// Scorer for a language model uniform over a vocabulary of `vocab_size`
/// tokens: every text's perplexity is exactly the vocabulary size.
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl PerplexityScorer for UniformScorer {
    fn perplexity(&self, text: &str) -> Result<f64> {
        let n = tokenize(text)?.tokens.len();
        if n < 2 {
            return Err(Error::TooShort { len: n, min: 2 });
        }
        Ok(self.vocab_size as f64)
    }
}

/// Scorer defined by an explicit next-token probability table, for hand
/// chain-rule checks. Transitions missing from the table get `default_prob`.
pub struct BigramScorer {
    probs: BTreeMap<(String, String), f64>,
    default_prob: f64,
}

impl BigramScorer {
    pub fn new(default_prob: f64) -> Self {
        assert!(default_prob > 0.0 && default_prob <= 1.0);
        BigramScorer { probs: BTreeMap::new(), default_prob }
    }

    pub fn with(mut self, prev: &str, next: &str, prob: f64) -> Self {
        assert!(prob > 0.0 && prob <= 1.0);
        self.probs.insert((prev.to_string(), next.to_string()), prob);
        self
    }

    fn prob(&self, prev: &str, next: &str) -> f64 {
        self.probs
            .get(&(prev.to_string(), next.to_string()))
            .copied()
            .unwrap_or(self.default_prob)
    }
}

impl PerplexityScorer for BigramScorer {
    fn perplexity(&self, text: &str) -> Result<f64> {
        let tokens = tokenize(text)?.tokens;
        if tokens.len() < 2 {
            return Err(Error::TooShort { len: tokens.len(), min: 2 });
        }
        let nll: f64 = tokens.windows(2).map(|w| -self.prob(&w[0], &w[1]).ln()).sum();
        Ok((nll / (tokens.len() - 1) as f64).exp())
    }
}

/// Scorer that looks texts up in a fixed table.
pub struct TableScorer {
    map: BTreeMap<String, f64>,
}

impl TableScorer {
    pub fn new() -> Self {
        TableScorer { map: BTreeMap::new() }
    }

    pub fn with(mut self, text: &str, ppl: f64) -> Self {
        self.map.insert(text.to_string(), ppl);
        self
    }
}

impl Default for TableScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl PerplexityScorer for TableScorer {
    fn perplexity(&self, text: &str) -> Result<f64> {
        self.map
            .get(text)
            .copied()
            .ok_or_else(|| Error::BackendUnavailable(format!("no scripted perplexity for `{text}`")))
    }
}

/// Continuer that always emits the same scripted continuation, truncated to
/// the token budget.
pub struct ScriptedContinuer {
    continuation: String,
}

impl ScriptedContinuer {
    pub fn new(continuation: impl Into<String>) -> Self {
        ScriptedContinuer { continuation: continuation.into() }
    }
}

impl TextContinuer for ScriptedContinuer {
    fn continue_text(&self, prefix: &str, max_new_tokens: usize, _seed: u64) -> Result<String> {
        if prefix.trim().is_empty() {
            return Err(Error::EmptyInput);
        }
        let tokens = tokenize(&self.continuation)?.tokens;
        let take = tokens.len().min(max_new_tokens);
        if take == 0 {
            return Err(Error::Domain("token budget must be positive".into()));
        }
        detokenize_tokens(&tokens[..take])
    }
}

/// Encoder that looks joined fields up in a fixed embedding table.
pub struct TableEncoder {
    map: BTreeMap<String, Vec<f64>>,
}

impl TableEncoder {
    pub fn new() -> Self {
        TableEncoder { map: BTreeMap::new() }
    }

    pub fn with(mut self, text: &str, embedding: Vec<f64>) -> Self {
        self.map.insert(text.to_string(), embedding);
        self
    }
}

impl Default for TableEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl SentenceEncoder for TableEncoder {
    fn encode(&self, fields: &[String]) -> Result<Vec<f64>> {
        let key = fields.join(" [SEP] ");
        self.map
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::BackendUnavailable(format!("no scripted embedding for `{key}`")))
    }
}
