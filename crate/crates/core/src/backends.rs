//! Model-role traits that decouple attack and defense logic from any
//! particular implementation.
//!
//! Three roles appear throughout: a masked language model that fills blanks
//! (the attacker), a classifier under attack (the victim), and a causal
//! language model used for sentence continuation and fluency scoring.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities over a task's label list, indexed by label position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain("label probabilities must be finite and non-negative".into()));
        }
        Ok(LabelDistribution { probs })
    }

    /// Index of the highest-probability label; ties break toward the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs.get(index).copied().unwrap_or(0.0)
    }
}

/// One filled slot: which mask it fills, the chosen token, and the token's
/// log-probability under the filler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFill {
    /// Index of the slot in ascending mask-position order.
    pub slot_index: usize,
    pub token: String,
    pub score: f64,
}

/// A complete assignment: exactly one [`SlotFill`] per mask, slot order.
pub type FillAssignment = Vec<SlotFill>;

/// A masked language model that proposes tokens for `[MASK]` slots.
pub trait MaskFiller: Send + Sync {
    /// Draws `n_samples` complete assignments for the masks in `tokens`,
    /// sampling each slot from its top `topk` tokens. Deterministic for a
    /// fixed seed; errors if `tokens` has no masks.
    fn fill_slots(
        &self,
        tokens: &[String],
        n_samples: usize,
        topk: usize,
        seed: u64,
    ) -> Result<Vec<FillAssignment>>;
}

/// One supervised slot-prediction example: a token sequence containing mask
/// markers and the target token for each masked position.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrainingExample {
    pub tokens: Vec<String>,
    /// (absolute token position of the mask, target token), ascending.
    pub targets: Vec<(usize, String)>,
}

/// A filler whose parameters can be fine-tuned on slot predictions.
pub trait TrainableFiller: MaskFiller {
    /// Cross-entropy fine-tuning over the target tokens at masked slots only;
    /// every other position is excluded from the loss. Returns the mean
    /// training loss per epoch.
    fn fine_tune_slots(
        &mut self,
        examples: &[SlotTrainingExample],
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Vec<f64>>;
}

/// A classifier over one- or two-field instances.
pub trait Classifier: Send + Sync {
    fn num_labels(&self) -> usize;

    /// Label distribution for one instance; `fields` carries either a single
    /// text or a premise/hypothesis pair.
    fn classify(&self, fields: &[String]) -> Result<LabelDistribution>;

    fn classify_batch(&self, batch: &[Vec<String>]) -> Result<Vec<LabelDistribution>> {
        batch.iter().map(|fields| self.classify(fields)).collect()
    }
}

/// A causal language model used to extend a text with new words.
pub trait TextContinuer: Send + Sync {
    /// Returns a continuation of `prefix` holding at most `max_new_tokens`
    /// word-level tokens (the prefix itself is not included), stopping at the
    /// first sentence-final mark once a minimum length is reached.
    /// Deterministic for a fixed `seed`.
    fn continue_text(&self, prefix: &str, max_new_tokens: usize, seed: u64) -> Result<String>;
}

/// Fluency scoring via a language model.
pub trait PerplexityScorer: Send + Sync {
    /// Per-token perplexity of `text`, conditioning each token on its
    /// predecessors and skipping the unconditioned first token.
    fn perplexity(&self, text: &str) -> Result<f64>;
}

/// Pooled sentence representations, used by the consistency defense.
pub trait SentenceEncoder: Send + Sync {
    fn encode(&self, fields: &[String]) -> Result<Vec<f64>>;
}

/// Wraps a classifier and counts how many single-instance queries reach it.
/// A batch of `k` instances counts as `k` queries.
pub struct CountingClassifier<'a> {
    inner: &'a dyn Classifier,
    count: AtomicU64,
}

impl<'a> CountingClassifier<'a> {
    pub fn new(inner: &'a dyn Classifier) -> Self {
        CountingClassifier { inner, count: AtomicU64::new(0) }
    }

    pub fn queries(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl Classifier for CountingClassifier<'_> {
    fn num_labels(&self) -> usize {
        self.inner.num_labels()
    }

    fn classify(&self, fields: &[String]) -> Result<LabelDistribution> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.classify(fields)
    }

    fn classify_batch(&self, batch: &[Vec<String>]) -> Result<Vec<LabelDistribution>> {
        self.count.fetch_add(batch.len() as u64, Ordering::Relaxed);
        self.inner.classify_batch(batch)
    }
}
