//! Few-shot fine-tuning of the filler on known adversarial pairs.
//!
//! Each (original, adversarial) pair becomes one training example: the
//! adversarial text with its changed positions masked, concatenated with the
//! gold-label trigger. The filler learns to put the adversarial tokens back
//! into the slots, sharpening it toward label-flipping fills.

use crate::backends::{SlotTrainingExample, TrainableFiller};
use crate::error::{Error, Result};
use crate::prompting::{build_prompt, MaskPlan};
use crate::task::{Instance, TaskSpec};
use crate::text::tokenize;

/// Word indices where the two token sequences disagree.
pub fn diff_positions(original: &[String], adversarial: &[String]) -> Result<Vec<usize>> {
    if original.len() != adversarial.len() {
        return Err(Error::LengthMismatch { left: original.len(), right: adversarial.len() });
    }
    Ok((0..original.len()).filter(|&i| original[i] != adversarial[i]).collect())
}

/// One filler training example derived from an adversarial pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrainingExample {
    /// Trigger plus the adversarial attack field with changed positions
    /// masked (premise included for text pairs).
    pub masked_input: Vec<String>,
    /// (absolute mask position in `masked_input`, adversarial token),
    /// ascending.
    pub target_tokens: Vec<(usize, String)>,
    pub source_ids: (String, String),
}

impl AttackTrainingExample {
    /// Restores the targets into the masked input.
    pub fn reconstruct(&self) -> Vec<String> {
        let mut tokens = self.masked_input.clone();
        for (pos, target) in &self.target_tokens {
            tokens[*pos] = target.clone();
        }
        tokens
    }

    pub fn to_slot_example(&self) -> SlotTrainingExample {
        SlotTrainingExample { tokens: self.masked_input.clone(), targets: self.target_tokens.clone() }
    }
}

/// Everything `build_attack_training_set` produced, including the pairs it
/// had to skip because original and adversarial text were identical.
#[derive(Debug, Clone, Default)]
pub struct TrainingSetBuild {
    pub examples: Vec<AttackTrainingExample>,
    pub skipped_ids: Vec<String>,
}

/// Turns (instance, adversarial text) pairs into filler training examples.
/// Pairs may come from any attacker; the search baseline is the usual source.
pub fn build_attack_training_set(
    pairs: &[(Instance, String)],
    task: &TaskSpec,
) -> Result<TrainingSetBuild> {
    let mut build = TrainingSetBuild::default();
    for (inst, adversarial_text) in pairs {
        inst.validate(task)?;
        let original = tokenize(inst.attack_text(task))?.tokens;
        let adversarial = tokenize(adversarial_text)?.tokens;
        let diffs = diff_positions(&original, &adversarial)?;
        if diffs.is_empty() {
            build.skipped_ids.push(inst.id.clone());
            continue;
        }
        let ratio = diffs.len() as f64 / original.len() as f64;
        let plan = MaskPlan::new(&inst.id[..], diffs.clone(), ratio, 0)?;
        let adv_inst = inst.with_attack_text(task, adversarial_text.clone());
        let prompt = build_prompt(&adv_inst, &plan, task)?;
        let target_tokens: Vec<(usize, String)> = prompt
            .slot_positions()
            .into_iter()
            .zip(diffs.iter().map(|&d| adversarial[d].clone()))
            .collect();
        build.examples.push(AttackTrainingExample {
            masked_input: prompt.tokens.tokens,
            target_tokens,
            source_ids: (inst.id.clone(), format!("{}:adv", inst.id)),
        });
    }
    Ok(build)
}

/// Fine-tunes the filler on the built examples; returns the per-epoch mean
/// loss trace. Zero epochs is an explicit no-op.
pub fn train_filler(
    filler: &mut dyn TrainableFiller,
    examples: &[AttackTrainingExample],
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
    let slot_examples: Vec<SlotTrainingExample> =
        examples.iter().map(AttackTrainingExample::to_slot_example).collect();
    filler.fine_tune_slots(&slot_examples, epochs, learning_rate, seed)
}
