//! Robustness training.
//!
//! The prompt-based path never generates adversarial text. For every
//! training instance it builds a prompt (gold-label trigger plus masked
//! original, mask markers left in place) and minimizes
//! alpha * L_o + (1 - alpha) * L_p, where L_o is the usual classification
//! cross-entropy and L_p pulls the prompt's sentence embedding toward the
//! original's. The conventional baseline instead materializes adversarial
//! examples for a fraction of the training set and retrains on the
//! augmented data.

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack_word::{AttackResult, AttackStatus};
use crate::backends::SentenceEncoder;
use crate::error::{Error, Result};
use crate::models::TextClassifier;
use crate::nn::{Adam, cross_entropy_at};
use crate::prompting::{build_prompt, plan_masks};
use crate::seeding::{derive_seed, derive_seed_indexed, shuffled_order};
use crate::task::{Instance, TaskKind, TaskSpec};
use crate::text::{SEP_TOKEN, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    pub alpha: f64,
    pub prompt_mask_ratio: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            alpha: 0.1,
            prompt_mask_ratio: 0.15,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.prompt_mask_ratio > 0.0 && self.prompt_mask_ratio <= 1.0) {
            return Err(Error::Domain(format!(
                "prompt_mask_ratio {} outside (0, 1]",
                self.prompt_mask_ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One training instance paired with its unfilled prompt rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub instance_id: String,
    pub original_text: String,
    pub prompt_text: String,
}

/// The text a single-input encoder reads for this instance, separator token
/// between pair fields.
pub fn instance_text(inst: &Instance, task: &TaskSpec) -> String {
    match task.kind {
        TaskKind::SingleText => inst.fields[0].clone(),
        TaskKind::TextPair => format!("{} {} {}", inst.fields[0], SEP_TOKEN, inst.fields[1]),
    }
}

/// Builds exactly one pair per instance. Mask plans draw from `seed`, so
/// distinct seeds give distinct manifestations of the same training set.
pub fn build_prompt_pairs(
    train: &[Instance],
    task: &TaskSpec,
    cfg: &DefenseConfig,
    seed: u64,
) -> Result<Vec<PromptPair>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    train
        .par_iter()
        .map(|inst| {
            let tok = tokenize(inst.attack_text(task))?;
            let plans = plan_masks(&inst.id, &tok, cfg.prompt_mask_ratio, 1, seed)?;
            let prompt = build_prompt(inst, &plans[0], task)?;
            Ok(PromptPair {
                instance_id: inst.id.clone(),
                original_text: instance_text(inst, task),
                prompt_text: prompt.display_text()?,
            })
        })
        .collect()
}

/// Mean squared Euclidean distance between prompt and original embeddings.
pub fn prompt_loss(pairs: &[PromptPair], encoder: &dyn SentenceEncoder) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for pair in pairs {
        let e_x = encoder.encode(&[pair.original_text.clone()])?;
        let e_p = encoder.encode(&[pair.prompt_text.clone()])?;
        if e_x.len() != e_p.len() {
            return Err(Error::LengthMismatch { left: e_p.len(), right: e_x.len() });
        }
        total += e_p.iter().zip(&e_x).map(|(p, x)| (p - x) * (p - x)).sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

/// The same quantity computed directly on embedding vectors.
pub fn prompt_loss_from_embeddings(e_p: &[Vec<f64>], e_x: &[Vec<f64>]) -> Result<f64> {
    if e_p.is_empty() {
        return Err(Error::EmptyInput);
    }
    if e_p.len() != e_x.len() {
        return Err(Error::LengthMismatch { left: e_p.len(), right: e_x.len() });
    }
    let mut total = 0.0;
    for (p, x) in e_p.iter().zip(e_x) {
        if p.len() != x.len() {
            return Err(Error::LengthMismatch { left: p.len(), right: x.len() });
        }
        total += p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / e_p.len() as f64)
}

/// Analytic gradients of [`prompt_loss_from_embeddings`] with respect to
/// both embedding batches.
pub fn prompt_loss_embedding_grads(
    e_p: &[Vec<f64>],
    e_x: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    prompt_loss_from_embeddings(e_p, e_x)?;
    let scale = 2.0 / e_p.len() as f64;
    let mut g_p = Vec::with_capacity(e_p.len());
    let mut g_x = Vec::with_capacity(e_x.len());
    for (p, x) in e_p.iter().zip(e_x) {
        let gp: Vec<f64> = p.iter().zip(x).map(|(a, b)| scale * (a - b)).collect();
        let gx: Vec<f64> = gp.iter().map(|g| -g).collect();
        g_p.push(gp);
        g_x.push(gx);
    }
    Ok((g_p, g_x))
}

pub fn combined_loss(l_o: f64, l_p: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(alpha * l_o + (1.0 - alpha) * l_p)
}

/// Per-epoch mean losses from a defended training run. With alpha = 1 the
/// prompt column is identically zero and `combined` equals `classification`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseTrace {
    pub combined: Vec<f64>,
    pub classification: Vec<f64>,
    pub prompt: Vec<f64>,
}

/// Optimizes alpha * L_o + (1 - alpha) * L_p over the training set, with
/// fresh mask plans every epoch. At alpha = 1 the prompt branch is skipped
/// entirely, which makes this plain fine-tuning.
pub fn train_defended(
    cls: &mut TextClassifier,
    train: &[Instance],
    task: &TaskSpec,
    cfg: &DefenseConfig,
) -> Result<DefenseTrace> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels: Vec<usize> = train
        .iter()
        .map(|inst| {
            task.label_index(&inst.gold_label)
                .ok_or_else(|| Error::UnknownLabel(inst.gold_label.clone()))
        })
        .collect::<Result<_>>()?;

    let mut adam = Adam::new(cfg.learning_rate);
    let mut trace =
        DefenseTrace { combined: Vec::new(), classification: Vec::new(), prompt: Vec::new() };
    for epoch in 0..cfg.epochs {
        let pairs = if cfg.alpha < 1.0 {
            Some(build_prompt_pairs(
                train,
                task,
                cfg,
                derive_seed_indexed(cfg.seed, "pairs", epoch as u64),
            )?)
        } else {
            None
        };
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed_indexed(cfg.seed, "order", epoch as u64));
        let order = shuffled_order(train.len(), &mut rng);

        let mut sums = (0.0, 0.0, 0.0);
        let mut in_batch = 0usize;
        cls.zero_grads();
        for &i in &order {
            let tokens_x = cls.field_tokens(&train[i].fields)?;
            let cache_x = cls.forward_tokens(&tokens_x)?;
            let logits2 = cache_x.logits.clone().insert_axis(Axis(0)).to_owned();
            let (l_o, dlogits2) = cross_entropy_at(&logits2, &[(0, labels[i])])?;
            let dlogits = dlogits2.row(0).to_owned();

            let (l_p, combined) = match &pairs {
                None => {
                    cls.backward_tokens(&cache_x, Some(&dlogits), None);
                    (0.0, l_o)
                }
                Some(pairs) => {
                    let tokens_p = tokenize(&pairs[i].prompt_text)?.tokens;
                    let cache_p = cls.forward_tokens(&tokens_p)?;
                    let diff = &cache_p.pooled - &cache_x.pooled;
                    let l_p = diff.iter().map(|d| d * d).sum::<f64>();
                    let dpool_p = diff.mapv(|d| (1.0 - cfg.alpha) * 2.0 * d);
                    let dpool_x = dpool_p.mapv(|g| -g);
                    let dlogits_scaled = dlogits.mapv(|g| cfg.alpha * g);
                    cls.backward_tokens(&cache_p, None, Some(&dpool_p));
                    cls.backward_tokens(&cache_x, Some(&dlogits_scaled), Some(&dpool_x));
                    (l_p, combined_loss(l_o, l_p, cfg.alpha)?)
                }
            };
            sums.0 += combined;
            sums.1 += l_o;
            sums.2 += l_p;
            in_batch += 1;
            if in_batch == cfg.batch_size {
                adam.begin_step();
                cls.adam_step(&adam);
                cls.zero_grads();
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            adam.begin_step();
            cls.adam_step(&adam);
            cls.zero_grads();
        }
        let n = train.len() as f64;
        trace.combined.push(sums.0 / n);
        trace.classification.push(sums.1 / n);
        trace.prompt.push(sums.2 / n);
    }
    Ok(trace)
}

/// Plain classification fine-tuning: the alpha = 1 boundary of
/// [`train_defended`].
pub fn fine_tune_classifier(
    cls: &mut TextClassifier,
    train: &[Instance],
    task: &TaskSpec,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = DefenseConfig {
        alpha: 1.0,
        epochs,
        learning_rate,
        batch_size,
        seed,
        ..DefenseConfig::default()
    };
    Ok(train_defended(cls, train, task, &cfg)?.combined)
}

/// An augmentation run: the training set plus every successful adversarial
/// text, appended with its original gold label.
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub augmented: Vec<Instance>,
    pub n_attacked: usize,
    pub n_success: usize,
}

/// Attacks a uniformly sampled fraction of the training set and appends the
/// successes. The attacker closure owns its victim and settings.
pub fn adversarial_augment<F>(
    train: &[Instance],
    attacker: F,
    fraction: f64,
    task: &TaskSpec,
    seed: u64,
) -> Result<AugmentOutcome>
where
    F: Fn(&Instance) -> Result<AttackResult> + Sync,
{
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("fraction {fraction} outside (0, 1]")));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let take =
        (((fraction * train.len() as f64) + 0.5).floor() as usize).clamp(1, train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "augment"));
    let picked: Vec<usize> = shuffled_order(train.len(), &mut rng).into_iter().take(take).collect();

    let results: Vec<AttackResult> =
        picked.par_iter().map(|&i| attacker(&train[i])).collect::<Result<_>>()?;

    let mut augmented = train.to_vec();
    let mut n_success = 0;
    for (&i, result) in picked.iter().zip(&results) {
        if result.status != AttackStatus::Success {
            continue;
        }
        let Some(text) = &result.adversarial_text else { continue };
        n_success += 1;
        let inst = &train[i];
        augmented.push(
            inst.with_attack_text(task, text.clone()).with_id(format!("{}:adv", inst.id)),
        );
    }
    Ok(AugmentOutcome { augmented, n_attacked: take, n_success })
}
