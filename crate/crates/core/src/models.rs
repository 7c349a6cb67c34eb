//! Desk-scale reference backends: a masked-LM filler, a causal LM for
//! continuation and perplexity, and a classifier victim, all built on the
//! transformer in [`crate::nn`]. Each model persists to a JSON checkpoint
//! and restores byte-identically.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{
    Classifier, FillAssignment, LabelDistribution, MaskFiller, PerplexityScorer, SentenceEncoder,
    SlotFill, SlotTrainingExample, TextContinuer, TrainableFiller,
};
use crate::error::{Error, Result};
use crate::nn::{Adam, Encoder, EncoderConfig, Linear, TensorData, cross_entropy_at};
use crate::seeding::{derive_seed, derive_seed_indexed, shuffled_order};
use crate::text::{MASK_TOKEN, SEP_TOKEN, detokenize_tokens, is_stop_mark, tokenize};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const BOS_TOKEN: &str = "[BOS]";

const SPECIALS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, SEP_TOKEN, BOS_TOKEN];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MASK_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const BOS_ID: usize = 4;

/// Token inventory shared by a model and its checkpoint. The five special
/// tokens always occupy ids 0..5; corpus tokens follow ordered by
/// descending frequency then alphabetically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(corpus_tokens: Vec<String>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for t in corpus_tokens {
            if !SPECIALS.contains(&t.as_str()) {
                tokens.push(t);
            }
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn from_corpus(texts: &[String], min_count: usize) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for token in tokenize(text)?.tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ordered: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Vocab::from_tokens(ordered.into_iter().map(|(t, _)| t).collect()))
    }

    fn rebuild_index(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Ids eligible as mask fills: ordinary word tokens, never specials or
    /// punctuation.
    pub fn word_ids(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(i, t)| {
                *i >= SPECIALS.len() && t.chars().next().is_some_and(|c| c.is_alphanumeric())
            })
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape { d_model: 32, n_heads: 2, n_layers: 2, d_ff: 64, max_len: 64 }
    }
}

impl ModelShape {
    fn encoder_config(&self, vocab_size: usize, causal: bool) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_len: self.max_len,
            causal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 10, learning_rate: 1e-3, batch_size: 8, seed: 0 }
    }
}

/// Writes a whole file through a sibling temp path and an atomic rename, so
/// readers only ever observe the old file or the complete new one.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
            std::process::id()
        )),
        None => std::path::PathBuf::from(format!(".out.tmp{}", std::process::id())),
    };
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    kind: String,
    shape: ModelShape,
    vocab: Vocab,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected_fields: Option<usize>,
    state: BTreeMap<String, TensorData>,
}

fn read_checkpoint(path: &Path, expect_kind: &str) -> Result<CheckpointFile> {
    let bytes = std::fs::read(path)?;
    let mut file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.kind != expect_kind {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint kind {} where {} was expected",
            path.display(),
            file.kind,
            expect_kind
        )));
    }
    file.vocab.rebuild_index();
    Ok(file)
}

fn weighted_draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    debug_assert!(!weights.is_empty());
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Indices of the k largest values, ties broken toward lower index.
fn top_k_indices(values: &Array1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order.truncate(k.max(1));
    order
}

/// Masked language model used as the prompt filler.
pub struct MlmModel {
    pub vocab: Vocab,
    pub enc: Encoder,
    shape: ModelShape,
}

impl MlmModel {
    pub fn new(vocab: Vocab, shape: ModelShape, seed: u64) -> Self {
        let enc = Encoder::new(shape.encoder_config(vocab.len(), false), seed);
        MlmModel { vocab, enc, shape }
    }

    /// Masked-token pretraining over raw text lines. Roughly 15% of the
    /// positions of each line are replaced by the mask token, and the model
    /// is trained to restore them. Returns the per-epoch mean loss.
    pub fn pretrain(&mut self, texts: &[String], opts: TrainOptions) -> Result<Vec<f64>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput);
        }
        let encoded: Vec<Vec<usize>> = texts
            .iter()
            .map(|t| tokenize(t).map(|tok| self.truncate(self.vocab.encode(&tok.tokens))))
            .collect::<Result<_>>()?;
        let mut adam = Adam::new(opts.learning_rate);
        let mut trace = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed_indexed(opts.seed, "mlm-epoch", epoch as u64));
            let order = shuffled_order(encoded.len(), &mut rng);
            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            let mut in_batch = 0usize;
            self.enc.zero_grads();
            for &ex in &order {
                let ids = &encoded[ex];
                if ids.len() < 2 {
                    continue;
                }
                let n_mask = ((0.15 * ids.len() as f64 + 0.5).floor() as usize).max(1);
                let mut positions: Vec<usize> = (0..ids.len()).collect();
                for i in 0..n_mask {
                    let j = rng.random_range(i..positions.len());
                    positions.swap(i, j);
                }
                let mut masked = ids.clone();
                let mut targets = Vec::with_capacity(n_mask);
                for &p in &positions[..n_mask] {
                    targets.push((p, ids[p]));
                    masked[p] = MASK_ID;
                }
                epoch_loss += self.train_step(&masked, &targets)?;
                seen += 1;
                in_batch += 1;
                if in_batch == opts.batch_size {
                    adam.begin_step();
                    self.enc.adam_step(&adam);
                    self.enc.zero_grads();
                    in_batch = 0;
                }
            }
            if in_batch > 0 {
                adam.begin_step();
                self.enc.adam_step(&adam);
                self.enc.zero_grads();
            }
            if seen == 0 {
                return Err(Error::Domain("no trainable lines in the corpus".into()));
            }
            trace.push(epoch_loss / seen as f64);
        }
        Ok(trace)
    }

    fn truncate(&self, mut ids: Vec<usize>) -> Vec<usize> {
        ids.truncate(self.shape.max_len);
        ids
    }

    fn train_step(&mut self, ids: &[usize], targets: &[(usize, usize)]) -> Result<f64> {
        let (hidden, cache) = self.enc.forward(ids)?;
        let logits = self.enc.logits(&hidden);
        let (loss, dlogits) = cross_entropy_at(&logits, targets)?;
        let dhidden = self.enc.logits_backward(&hidden, &dlogits);
        self.enc.backward(&cache, &dhidden);
        Ok(loss)
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            kind: "mlm".into(),
            shape: self.shape,
            vocab: self.vocab.clone(),
            labels: None,
            expected_fields: None,
            state: self.enc.state_dict(),
        };
        write_atomic(path, &serde_json::to_vec(&file).expect("checkpoint serializes"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_checkpoint(path, "mlm")?;
        let mut model = MlmModel::new(file.vocab, file.shape, 0);
        model.enc.load_state_dict(&file.state)?;
        Ok(model)
    }
}

impl MaskFiller for MlmModel {
    fn fill_slots(
        &self,
        tokens: &[String],
        n_samples: usize,
        topk: usize,
        seed: u64,
    ) -> Result<Vec<FillAssignment>> {
        if n_samples == 0 {
            return Err(Error::Domain("n_samples must be positive".into()));
        }
        let slots: Vec<usize> =
            tokens.iter().enumerate().filter(|(_, t)| *t == MASK_TOKEN).map(|(i, _)| i).collect();
        if slots.is_empty() {
            return Err(Error::NoSlots);
        }
        self.enc.check_len(tokens.len())?;
        let ids = self.vocab.encode(tokens);
        let (hidden, _) = self.enc.forward(&ids)?;
        let logits = self.enc.logits(&hidden);
        let word_ids = self.vocab.word_ids();
        if word_ids.is_empty() {
            return Err(Error::BackendUnavailable("vocabulary holds no word tokens".into()));
        }

        let mut per_slot: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(slots.len());
        for &pos in &slots {
            let probs = crate::nn::softmax(&logits.row(pos).insert_axis(Axis(0)).to_owned());
            let restricted =
                Array1::from_iter(word_ids.iter().map(|&id| probs[[0, id]]));
            let top = top_k_indices(&restricted, topk);
            let choices: Vec<usize> = top.iter().map(|&i| word_ids[i]).collect();
            let weights: Vec<f64> = top.iter().map(|&i| restricted[i]).collect();
            let scores: Vec<f64> = weights.iter().map(|p| p.max(1e-300).ln().min(0.0)).collect();
            per_slot.push((choices, weights, scores));
        }

        let mut samples = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed_indexed(seed, "mlm-sample", s as u64));
            let mut assignment = Vec::with_capacity(slots.len());
            for (slot_index, (choices, weights, scores)) in per_slot.iter().enumerate() {
                let pick = weighted_draw(&mut rng, weights);
                assignment.push(SlotFill {
                    slot_index,
                    token: self.vocab.token(choices[pick]).to_string(),
                    score: scores[pick],
                });
            }
            samples.push(assignment);
        }
        Ok(samples)
    }
}

impl TrainableFiller for MlmModel {
    fn fine_tune_slots(
        &mut self,
        examples: &[SlotTrainingExample],
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if epochs == 0 {
            return Ok(Vec::new());
        }
        let mut prepared = Vec::with_capacity(examples.len());
        for ex in examples {
            if ex.tokens.len() > self.shape.max_len {
                return Err(Error::TooLong { len: ex.tokens.len(), max: self.shape.max_len });
            }
            let ids = self.vocab.encode(&ex.tokens);
            let targets: Vec<(usize, usize)> = ex
                .targets
                .iter()
                .map(|(pos, token)| (*pos, self.vocab.id(token)))
                .filter(|(_, id)| *id != UNK_ID)
                .collect();
            if targets.is_empty() {
                continue;
            }
            prepared.push((ids, targets));
        }
        if prepared.is_empty() {
            return Err(Error::Domain("no in-vocabulary targets to fine-tune on".into()));
        }
        let mut adam = Adam::new(learning_rate);
        let mut trace = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed_indexed(seed, "ft-epoch", epoch as u64));
            let order = shuffled_order(prepared.len(), &mut rng);
            let mut epoch_loss = 0.0;
            let mut in_batch = 0usize;
            self.enc.zero_grads();
            for &ex in &order {
                let (ids, targets) = &prepared[ex];
                epoch_loss += self.train_step(ids, targets)?;
                in_batch += 1;
                if in_batch == 8 {
                    adam.begin_step();
                    self.enc.adam_step(&adam);
                    self.enc.zero_grads();
                    in_batch = 0;
                }
            }
            if in_batch > 0 {
                adam.begin_step();
                self.enc.adam_step(&adam);
                self.enc.zero_grads();
            }
            trace.push(epoch_loss / prepared.len() as f64);
        }
        Ok(trace)
    }
}

/// Autoregressive language model used for sentence continuation and
/// perplexity scoring.
pub struct CausalLm {
    pub vocab: Vocab,
    pub enc: Encoder,
    shape: ModelShape,
    /// Tokens to emit before a stop mark may end a continuation.
    pub min_tokens_before_stop: usize,
    /// Candidate pool size when sampling continuations.
    pub sample_top_k: usize,
}

impl CausalLm {
    pub fn new(vocab: Vocab, shape: ModelShape, seed: u64) -> Self {
        let enc = Encoder::new(shape.encoder_config(vocab.len(), true), seed);
        CausalLm { vocab, enc, shape, min_tokens_before_stop: 5, sample_top_k: 10 }
    }

    /// Next-token pretraining over raw text lines. Returns per-epoch mean
    /// loss.
    pub fn pretrain(&mut self, texts: &[String], opts: TrainOptions) -> Result<Vec<f64>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput);
        }
        let encoded: Vec<Vec<usize>> = texts
            .iter()
            .map(|t| {
                tokenize(t).map(|tok| {
                    let mut ids = vec![BOS_ID];
                    ids.extend(self.vocab.encode(&tok.tokens));
                    ids.truncate(self.shape.max_len);
                    ids
                })
            })
            .collect::<Result<_>>()?;
        let mut adam = Adam::new(opts.learning_rate);
        let mut trace = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed_indexed(opts.seed, "lm-epoch", epoch as u64));
            let order = shuffled_order(encoded.len(), &mut rng);
            let mut epoch_loss = 0.0;
            let mut seen = 0usize;
            let mut in_batch = 0usize;
            self.enc.zero_grads();
            for &ex in &order {
                let ids = &encoded[ex];
                if ids.len() < 2 {
                    continue;
                }
                let targets: Vec<(usize, usize)> =
                    (0..ids.len() - 1).map(|i| (i, ids[i + 1])).collect();
                let (hidden, cache) = self.enc.forward(ids)?;
                let logits = self.enc.logits(&hidden);
                let (loss, dlogits) = cross_entropy_at(&logits, &targets)?;
                let dhidden = self.enc.logits_backward(&hidden, &dlogits);
                self.enc.backward(&cache, &dhidden);
                epoch_loss += loss;
                seen += 1;
                in_batch += 1;
                if in_batch == opts.batch_size {
                    adam.begin_step();
                    self.enc.adam_step(&adam);
                    self.enc.zero_grads();
                    in_batch = 0;
                }
            }
            if in_batch > 0 {
                adam.begin_step();
                self.enc.adam_step(&adam);
                self.enc.zero_grads();
            }
            if seen == 0 {
                return Err(Error::Domain("no trainable lines in the corpus".into()));
            }
            trace.push(epoch_loss / seen as f64);
        }
        Ok(trace)
    }

    fn next_token_probs(&self, context: &[usize]) -> Result<Array1<f64>> {
        let (hidden, _) = self.enc.forward(context)?;
        let logits = self.enc.logits(&hidden);
        let last = logits.row(logits.nrows() - 1).insert_axis(Axis(0)).to_owned();
        Ok(crate::nn::softmax(&last).row(0).to_owned())
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            kind: "causal".into(),
            shape: self.shape,
            vocab: self.vocab.clone(),
            labels: None,
            expected_fields: None,
            state: self.enc.state_dict(),
        };
        write_atomic(path, &serde_json::to_vec(&file).expect("checkpoint serializes"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_checkpoint(path, "causal")?;
        let mut model = CausalLm::new(file.vocab, file.shape, 0);
        model.enc.load_state_dict(&file.state)?;
        Ok(model)
    }
}

impl TextContinuer for CausalLm {
    fn continue_text(&self, prefix: &str, max_new_tokens: usize, seed: u64) -> Result<String> {
        if max_new_tokens == 0 {
            return Err(Error::Domain("max_new_tokens must be positive".into()));
        }
        let prefix_tokens = tokenize(prefix)?;
        let mut context = vec![BOS_ID];
        context.extend(self.vocab.encode(&prefix_tokens.tokens));
        if context.len() > self.shape.max_len - 1 {
            context.drain(1..context.len() - (self.shape.max_len - 2));
        }

        let samplable: Vec<usize> = (0..self.vocab.len())
            .filter(|&id| ![PAD_ID, UNK_ID, MASK_ID, SEP_ID, BOS_ID].contains(&id))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "continue"));
        let mut generated: Vec<String> = Vec::new();
        while generated.len() < max_new_tokens {
            if context.len() >= self.shape.max_len {
                break;
            }
            let probs = self.next_token_probs(&context)?;
            let restricted = Array1::from_iter(samplable.iter().map(|&id| probs[id]));
            let top = top_k_indices(&restricted, self.sample_top_k);
            let weights: Vec<f64> = top.iter().map(|&i| restricted[i]).collect();
            let pick = samplable[top[weighted_draw(&mut rng, &weights)]];
            let token = self.vocab.token(pick).to_string();
            context.push(pick);
            generated.push(token.clone());
            if is_stop_mark(&token) && generated.len() >= self.min_tokens_before_stop {
                break;
            }
        }
        if generated.is_empty() {
            return Ok(String::new());
        }
        detokenize_tokens(&generated)
    }
}

impl PerplexityScorer for CausalLm {
    fn perplexity(&self, text: &str) -> Result<f64> {
        let tokens = tokenize(text)?;
        if tokens.tokens.len() < 2 {
            return Err(Error::TooShort { len: tokens.tokens.len(), min: 2 });
        }
        let mut ids = self.vocab.encode(&tokens.tokens);
        ids.truncate(self.shape.max_len);
        let (hidden, _) = self.enc.forward(&ids)?;
        let logits = self.enc.logits(&hidden);
        let probs = crate::nn::softmax(&logits);
        let mut nll = 0.0;
        for i in 1..ids.len() {
            nll -= probs[[i - 1, ids[i]]].max(1e-300).ln();
        }
        Ok((nll / (ids.len() - 1) as f64).exp())
    }
}

/// Encoder classifier used as the attack victim; also exposes its pooled
/// representation as the sentence embedding.
pub struct TextClassifier {
    pub vocab: Vocab,
    pub enc: Encoder,
    pub head: Linear,
    pub labels: Vec<String>,
    pub expected_fields: usize,
    shape: ModelShape,
}

pub(crate) struct ClassifierCache {
    enc_cache: crate::nn::EncoderCache,
    pub(crate) pooled: Array1<f64>,
    pub(crate) logits: Array1<f64>,
}

impl TextClassifier {
    pub fn new(
        vocab: Vocab,
        shape: ModelShape,
        labels: Vec<String>,
        expected_fields: usize,
        seed: u64,
    ) -> Self {
        assert!(labels.len() >= 2);
        assert!(expected_fields == 1 || expected_fields == 2);
        let enc = Encoder::new(shape.encoder_config(vocab.len(), false), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cls-head"));
        let head = Linear::new(shape.d_model, labels.len(), &mut rng);
        TextClassifier { vocab, enc, head, labels, expected_fields, shape }
    }

    /// Joins fields into one token sequence, separator token between pairs.
    pub fn field_tokens(&self, fields: &[String]) -> Result<Vec<String>> {
        if fields.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut out = Vec::new();
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                out.push(SEP_TOKEN.to_string());
            }
            out.extend(tokenize(field)?.tokens);
        }
        Ok(out)
    }

    fn ids_for(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids = self.vocab.encode(tokens);
        ids.truncate(self.shape.max_len);
        ids
    }

    pub(crate) fn forward_tokens(&self, tokens: &[String]) -> Result<ClassifierCache> {
        let ids = self.ids_for(tokens);
        let (hidden, enc_cache) = self.enc.forward(&ids)?;
        let pooled = hidden.mean_axis(Axis(0)).expect("non-empty sequence");
        let logits_m = self.head.forward(&pooled.clone().insert_axis(Axis(0)).to_owned());
        let logits = logits_m.row(0).to_owned();
        Ok(ClassifierCache { enc_cache, pooled, logits })
    }

    /// Backward pass from head-logit and extra pooled-representation
    /// gradients. Parameter gradients accumulate in place.
    pub(crate) fn backward_tokens(
        &mut self,
        cache: &ClassifierCache,
        dlogits: Option<&Array1<f64>>,
        dpooled_extra: Option<&Array1<f64>>,
    ) {
        let mut dpooled = Array1::zeros(self.shape.d_model);
        if let Some(dl) = dlogits {
            let dl2 = dl.clone().insert_axis(Axis(0)).to_owned();
            let x = cache.pooled.clone().insert_axis(Axis(0)).to_owned();
            let dp = self.head.backward(&x, &dl2);
            dpooled += &dp.row(0);
        }
        if let Some(extra) = dpooled_extra {
            dpooled += extra;
        }
        let s = cache.enc_cache.hidden.nrows();
        let mut dhidden = Array2::zeros((s, self.shape.d_model));
        for mut row in dhidden.rows_mut() {
            row.assign(&(&dpooled / s as f64));
        }
        self.enc.backward(&cache.enc_cache, &dhidden);
    }

    pub(crate) fn zero_grads(&mut self) {
        self.enc.zero_grads();
        self.head.w.zero_grad();
        self.head.b.zero_grad();
    }

    pub(crate) fn adam_step(&mut self, adam: &Adam) {
        self.enc.adam_step(adam);
        adam.update(&mut self.head.w);
        adam.update(&mut self.head.b);
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let mut state = self.enc.state_dict();
        let head_entries = [("head.w", &self.head.w), ("head.b", &self.head.b)];
        for (name, t) in head_entries {
            state.insert(
                name.to_string(),
                TensorData {
                    shape: vec![t.v.nrows(), t.v.ncols()],
                    data: t.v.iter().cloned().collect(),
                },
            );
        }
        let file = CheckpointFile {
            kind: "classifier".into(),
            shape: self.shape,
            vocab: self.vocab.clone(),
            labels: Some(self.labels.clone()),
            expected_fields: Some(self.expected_fields),
            state,
        };
        write_atomic(path, &serde_json::to_vec(&file).expect("checkpoint serializes"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = read_checkpoint(path, "classifier")?;
        let labels = file
            .labels
            .take()
            .ok_or_else(|| Error::Checkpoint("classifier checkpoint lacks labels".into()))?;
        let expected_fields = file.expected_fields.unwrap_or(1);
        let mut model = TextClassifier::new(file.vocab, file.shape, labels, expected_fields, 0);
        let mut head_w = None;
        let mut head_b = None;
        let mut enc_state = BTreeMap::new();
        for (name, td) in file.state {
            match name.as_str() {
                "head.w" => head_w = Some(td),
                "head.b" => head_b = Some(td),
                _ => {
                    enc_state.insert(name, td);
                }
            }
        }
        model.enc.load_state_dict(&enc_state)?;
        for (slot, td) in [(&mut model.head.w, head_w), (&mut model.head.b, head_b)] {
            let td =
                td.ok_or_else(|| Error::Checkpoint("classifier checkpoint lacks head".into()))?;
            if td.shape != [slot.v.nrows(), slot.v.ncols()] {
                return Err(Error::Checkpoint("head shape mismatch".into()));
            }
            for (dst, src) in slot.v.iter_mut().zip(td.data.iter()) {
                *dst = *src;
            }
        }
        Ok(model)
    }
}

impl Classifier for TextClassifier {
    fn num_labels(&self) -> usize {
        self.labels.len()
    }

    fn classify(&self, fields: &[String]) -> Result<LabelDistribution> {
        if fields.len() != self.expected_fields {
            return Err(Error::FieldCount { expected: self.expected_fields, got: fields.len() });
        }
        let tokens = self.field_tokens(fields)?;
        let cache = self.forward_tokens(&tokens)?;
        let probs =
            crate::nn::softmax(&cache.logits.insert_axis(Axis(0)).to_owned()).row(0).to_vec();
        LabelDistribution::new(probs)
    }
}

impl SentenceEncoder for TextClassifier {
    fn encode(&self, fields: &[String]) -> Result<Vec<f64>> {
        let tokens = self.field_tokens(fields)?;
        let cache = self.forward_tokens(&tokens)?;
        Ok(cache.pooled.to_vec())
    }
}
