//! Task descriptions, labeled instances and trigger templates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize, tokenize};

/// Body-slot marker used in trigger template patterns for single-text tasks.
pub const BODY_SLOT: &str = "[x']";
/// Body-slot marker spelling used by text-pair patterns.
pub const PAIR_BODY_SLOT: &str = "[x2']";
/// Premise-slot marker used by text-pair patterns.
pub const PREMISE_SLOT: &str = "[x1]";

/// Whether a task takes one text or a premise/hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleText,
    TextPair,
}

/// Which field of an instance the attack perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackField {
    Text,
    Hypothesis,
}

/// Where the trigger sits relative to the attacked body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Prefix,
    Infix,
    Suffix,
}

/// A label-keyed trigger pattern with exactly one body slot.
///
/// Single-text patterns contain one `[x']` slot; text-pair patterns contain
/// one `[x1]` premise slot and one `[x2']` body slot. The trigger text must be
/// contiguous, so its placement is derived from where the slots sit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerTemplate {
    pub pattern: String,
    pub placement: Placement,
    /// Word-level tokens of the trigger text itself.
    pub trigger_tokens: Vec<String>,
}

impl TriggerTemplate {
    pub fn parse(pattern: &str, kind: TaskKind) -> Result<Self> {
        let pattern = normalize(pattern);
        let bad = |msg: &str| Error::BadTemplate { pattern: pattern.clone(), msg: msg.into() };

        let body_slot = match kind {
            TaskKind::SingleText => BODY_SLOT,
            TaskKind::TextPair => PAIR_BODY_SLOT,
        };
        if pattern.matches(body_slot).count() != 1 {
            return Err(bad(&format!("pattern must contain exactly one `{body_slot}` slot")));
        }

        let trigger_text = match kind {
            TaskKind::SingleText => {
                if pattern.contains(PREMISE_SLOT) {
                    return Err(bad("single-text pattern must not contain a premise slot"));
                }
                let (before, after) = pattern.split_once(body_slot).expect("slot present");
                match (before.trim(), after.trim()) {
                    (t, "") if !t.is_empty() => (t.to_string(), Placement::Prefix),
                    ("", t) if !t.is_empty() => (t.to_string(), Placement::Suffix),
                    ("", "") => return Err(bad("pattern has no trigger text")),
                    _ => return Err(bad("trigger text must be contiguous on one side of the body slot")),
                }
            }
            TaskKind::TextPair => {
                if pattern.matches(PREMISE_SLOT).count() != 1 {
                    return Err(bad("text-pair pattern must contain exactly one `[x1]` slot"));
                }
                let premise_at = pattern.find(PREMISE_SLOT).expect("slot present");
                let body_at = pattern.find(body_slot).expect("slot present");
                if premise_at > body_at {
                    return Err(bad("premise slot must precede the body slot"));
                }
                let between = &pattern[premise_at + PREMISE_SLOT.len()..body_at];
                let between = between.trim();
                if between.is_empty() {
                    return Err(bad("pattern has no trigger text between the slots"));
                }
                let leading = pattern[..premise_at].trim();
                let trailing = pattern[body_at + body_slot.len()..].trim();
                if !leading.is_empty() || !trailing.is_empty() {
                    return Err(bad("text-pair trigger text must sit between premise and body"));
                }
                (between.to_string(), Placement::Infix)
            }
        };
        let (text, placement) = trigger_text;
        let trigger_tokens = tokenize(&text)?.tokens;
        Ok(TriggerTemplate { pattern, placement, trigger_tokens })
    }
}

/// A task: label set, per-label triggers, and which field gets attacked.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Ordered label names; numeric dataset labels index into this list.
    pub labels: Vec<String>,
    pub trigger_map: BTreeMap<String, TriggerTemplate>,
    pub attack_field: AttackField,
}

impl TaskSpec {
    pub fn new(
        kind: TaskKind,
        labels: Vec<String>,
        trigger_map: BTreeMap<String, TriggerTemplate>,
        attack_field: AttackField,
    ) -> Result<Self> {
        for label in &labels {
            if !trigger_map.contains_key(label) {
                return Err(Error::MissingTemplate { label: label.clone() });
            }
        }
        if kind == TaskKind::TextPair && attack_field != AttackField::Hypothesis {
            return Err(Error::Domain("text-pair tasks attack the hypothesis field".into()));
        }
        if kind == TaskKind::SingleText && attack_field != AttackField::Text {
            return Err(Error::Domain("single-text tasks attack the text field".into()));
        }
        Ok(TaskSpec { kind, labels, trigger_map, attack_field })
    }

    /// Sentiment classification with the default label-inverting triggers.
    pub fn sentiment() -> Self {
        let mut triggers = BTreeMap::new();
        triggers.insert(
            "positive".to_string(),
            TriggerTemplate::parse("It is a bad movie, [x']", TaskKind::SingleText).unwrap(),
        );
        triggers.insert(
            "negative".to_string(),
            TriggerTemplate::parse("It is a good movie, [x']", TaskKind::SingleText).unwrap(),
        );
        TaskSpec::new(
            TaskKind::SingleText,
            vec!["negative".into(), "positive".into()],
            triggers,
            AttackField::Text,
        )
        .unwrap()
    }

    /// Natural language inference with the default relation-inverting triggers.
    ///
    /// The neutral label has no canonical inversion; `neutral_pattern` selects
    /// which of the two patterns it uses (defaults to the contradiction probe).
    pub fn nli(neutral_pattern: NeutralRule) -> Self {
        let entail = TriggerTemplate::parse("[x1] is contradictory with: [x2']", TaskKind::TextPair).unwrap();
        let contra = TriggerTemplate::parse("[x1] , implying that: [x2']", TaskKind::TextPair).unwrap();
        let neutral = match neutral_pattern {
            NeutralRule::Contradictory => entail.clone(),
            NeutralRule::Implying => contra.clone(),
        };
        let mut triggers = BTreeMap::new();
        triggers.insert("entailment".to_string(), entail);
        triggers.insert("contradiction".to_string(), contra);
        triggers.insert("neutral".to_string(), neutral);
        TaskSpec::new(
            TaskKind::TextPair,
            vec!["neutral".into(), "contradiction".into(), "entailment".into()],
            triggers,
            AttackField::Hypothesis,
        )
        .unwrap()
    }

    pub fn field_count(&self) -> usize {
        match self.kind {
            TaskKind::SingleText => 1,
            TaskKind::TextPair => 2,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Resolves a dataset label that is either a label name or a numeric index.
    pub fn resolve_label(&self, raw: &str) -> Result<String> {
        if self.labels.iter().any(|l| l == raw) {
            return Ok(raw.to_string());
        }
        if let Ok(idx) = raw.parse::<usize>() {
            if let Some(name) = self.labels.get(idx) {
                return Ok(name.clone());
            }
        }
        Err(Error::UnknownLabel(raw.to_string()))
    }
}

/// Which pattern the neutral NLI label borrows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeutralRule {
    #[default]
    Contradictory,
    Implying,
}

/// One labeled task input: a single text or a premise/hypothesis pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub fields: Vec<String>,
    pub gold_label: String,
}

impl Instance {
    pub fn new(id: impl Into<String>, fields: Vec<String>, gold_label: impl Into<String>) -> Self {
        Instance { id: id.into(), fields, gold_label: gold_label.into() }
    }

    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        if self.fields.len() != task.field_count() {
            return Err(Error::FieldCount { expected: task.field_count(), got: self.fields.len() });
        }
        if task.label_index(&self.gold_label).is_none() {
            return Err(Error::UnknownLabel(self.gold_label.clone()));
        }
        Ok(())
    }

    /// The field the attack perturbs.
    pub fn attack_text(&self, task: &TaskSpec) -> &str {
        match task.attack_field {
            AttackField::Text => &self.fields[0],
            AttackField::Hypothesis => &self.fields[1],
        }
    }

    /// The untouched premise, for text-pair tasks.
    pub fn premise(&self, task: &TaskSpec) -> Option<&str> {
        match task.kind {
            TaskKind::SingleText => None,
            TaskKind::TextPair => Some(&self.fields[0]),
        }
    }

    /// Copy of this instance with the attack field replaced.
    pub fn with_attack_text(&self, task: &TaskSpec, text: String) -> Instance {
        let mut fields = self.fields.clone();
        match task.attack_field {
            AttackField::Text => fields[0] = text,
            AttackField::Hypothesis => fields[1] = text,
        }
        Instance { id: self.id.clone(), fields, gold_label: self.gold_label.clone() }
    }

    /// Copy of this instance under a new id.
    pub fn with_id(mut self, id: impl Into<String>) -> Instance {
        self.id = id.into();
        self
    }
}
