//! Prompt construction: mask plans, trigger rendering, and the exact inverse
//! that strips the trigger back off a filled prompt.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::task::{Instance, Placement, TaskKind, TaskSpec, TriggerTemplate};
use crate::text::{detokenize_tokens, tokenize, TokenizedText, MASK_TOKEN};

/// Number of positions to mask in an `n`-token text, half-up rounded with a
/// floor of one.
pub fn mask_count(n: usize, ratio: f64) -> usize {
    debug_assert!(n >= 1 && ratio > 0.0 && ratio <= 1.0);
    ((ratio * n as f64 + 0.5).floor() as usize).max(1)
}

/// The positions of one masking of an instance's attack field.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub instance_id: String,
    /// Strictly increasing word indices into the attack field.
    pub masked_positions: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

impl MaskPlan {
    pub fn new(instance_id: impl Into<String>, masked_positions: Vec<usize>, ratio: f64, seed: u64) -> Result<Self> {
        if masked_positions.is_empty() {
            return Err(Error::NoSlots);
        }
        if !masked_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("masked positions must be strictly increasing".into()));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Domain("mask ratio must lie in (0, 1]".into()));
        }
        Ok(MaskPlan { instance_id: instance_id.into(), masked_positions, ratio, seed })
    }
}

/// `min(C(n, k), threshold)` without overflow; how many distinct position
/// sets exist, saturated at the requested plan count.
fn distinct_sets_available(n: usize, k: usize, threshold: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c >= u128::from(threshold) {
            return threshold;
        }
    }
    c as u64
}

fn sample_positions(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

/// Draws `count` mask plans over `tok`, each masking `mask_count` positions
/// uniformly without replacement. Plans repeat a position set only when the
/// text is too short to offer `count` distinct ones.
pub fn plan_masks(
    instance_id: &str,
    tok: &TokenizedText,
    ratio: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<MaskPlan>> {
    let n = tok.tokens.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain("mask ratio must lie in (0, 1]".into()));
    }
    if count == 0 {
        return Err(Error::Domain("plan count must be positive".into()));
    }
    let k = mask_count(n, ratio);
    let capacity = distinct_sets_available(n, k, count as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, instance_id));
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut plans = Vec::with_capacity(count);
    for _ in 0..count {
        let positions = loop {
            let candidate = sample_positions(&mut rng, n, k);
            if seen.len() as u64 >= capacity || !seen.contains(&candidate) {
                break candidate;
            }
        };
        seen.insert(positions.clone());
        plans.push(MaskPlan { instance_id: instance_id.to_string(), masked_positions: positions, ratio, seed });
    }
    Ok(plans)
}

/// Looks up the trigger pattern keyed by the instance's gold label.
pub fn render_trigger<'t>(task: &'t TaskSpec, gold_label: &str) -> Result<&'t TriggerTemplate> {
    task.trigger_map
        .get(gold_label)
        .ok_or_else(|| Error::MissingTemplate { label: gold_label.to_string() })
}

/// A masked instance concatenated with its trigger, ready for the filler.
#[derive(Debug, Clone)]
pub struct Prompt {
    /// Full token sequence: premise (text pairs only), trigger and masked body
    /// in placement order.
    pub tokens: TokenizedText,
    pub trigger_span: Range<usize>,
    pub body_span: Range<usize>,
    pub premise_span: Option<Range<usize>>,
    pub plan: MaskPlan,
    pub target_label_key: String,
    /// Unmasked attack-field tokens, kept for the strip round trip and for
    /// slot-level filtering against the original word.
    pub original_body: Vec<String>,
}

impl Prompt {
    /// Absolute token indices of the mask slots, ascending.
    pub fn slot_positions(&self) -> Vec<usize> {
        self.plan.masked_positions.iter().map(|p| self.body_span.start + p).collect()
    }

    /// Original token at slot `i` (ascending slot order).
    pub fn original_at_slot(&self, i: usize) -> &str {
        &self.original_body[self.plan.masked_positions[i]]
    }

    pub fn slot_count(&self) -> usize {
        self.plan.masked_positions.len()
    }

    /// Rendered prompt string with visible mask markers.
    pub fn display_text(&self) -> Result<String> {
        detokenize_tokens(&self.tokens.tokens)
    }

    /// Removes the trigger and substitutes one fill token per slot, returning
    /// the candidate attack-field text. `fill_tokens` follow ascending slot
    /// order.
    pub fn strip_trigger(&self, fill_tokens: &[String]) -> Result<String> {
        if fill_tokens.len() != self.slot_count() {
            return Err(Error::MissingFill { slot: fill_tokens.len().min(self.slot_count()) });
        }
        let mut body = self.original_body.clone();
        for (i, &pos) in self.plan.masked_positions.iter().enumerate() {
            let fill = &fill_tokens[i];
            if fill.is_empty() || fill == MASK_TOKEN {
                return Err(Error::MissingFill { slot: i });
            }
            body[pos] = fill.clone();
        }
        detokenize_tokens(&body)
    }
}

/// Masks the attack field per `plan`, attaches the gold-label trigger, and
/// records every span needed to invert the construction.
pub fn build_prompt(inst: &Instance, plan: &MaskPlan, task: &TaskSpec) -> Result<Prompt> {
    inst.validate(task)?;
    if plan.instance_id != inst.id {
        return Err(Error::Domain(format!("plan for `{}` applied to `{}`", plan.instance_id, inst.id)));
    }
    let body_tok = tokenize(inst.attack_text(task))?;
    let n = body_tok.tokens.len();
    if let Some(&max) = plan.masked_positions.last() {
        if max >= n {
            return Err(Error::Domain(format!("masked position {max} out of range for {n} tokens")));
        }
    } else {
        return Err(Error::NoSlots);
    }

    let template = render_trigger(task, &inst.gold_label)?;
    let mut masked_body = body_tok.tokens.clone();
    for &pos in &plan.masked_positions {
        masked_body[pos] = MASK_TOKEN.to_string();
    }

    let trigger = &template.trigger_tokens;
    let (tokens, premise_span, trigger_span, body_span) = match (task.kind, template.placement) {
        (TaskKind::SingleText, Placement::Prefix) => {
            let mut t = trigger.clone();
            t.extend(masked_body);
            (t, None, 0..trigger.len(), trigger.len()..trigger.len() + n)
        }
        (TaskKind::SingleText, Placement::Suffix) => {
            let mut t = masked_body;
            t.extend(trigger.iter().cloned());
            (t, None, n..n + trigger.len(), 0..n)
        }
        (TaskKind::SingleText, Placement::Infix) => {
            return Err(Error::Domain("single-text triggers sit before or after the body".into()));
        }
        (TaskKind::TextPair, _) => {
            let premise_tok = tokenize(inst.premise(task).expect("text pair has premise"))?;
            let p = premise_tok.tokens.len();
            let mut t = premise_tok.tokens;
            t.extend(trigger.iter().cloned());
            t.extend(masked_body);
            (t, Some(0..p), p..p + trigger.len(), p + trigger.len()..p + trigger.len() + n)
        }
    };

    Ok(Prompt {
        tokens: TokenizedText::from_tokens(tokens),
        trigger_span,
        body_span,
        premise_span,
        plan: plan.clone(),
        target_label_key: inst.gold_label.clone(),
        original_body: body_tok.tokens,
    })
}
