//! Prompt-based adversarial attacks on text classifiers, and the matching
//! prompt-based adversarial training defense.
//!
//! The pipeline: mask a fraction of word positions in an input, prepend or
//! append a label-keyed trigger phrase, let a masked language model fill the
//! blanks, then strip the trigger. The filled texts are candidate adversarial
//! examples; a victim classifier picks out the ones that flip its prediction.
//! The same prompting machinery drives a representation-consistency defense.

pub mod attack_learning;
pub mod attack_sentence;
pub mod attack_word;
pub mod backends;
pub mod baseline;
pub mod defense;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod lexicon;
pub mod models;
pub mod nn;
pub mod prompting;
pub mod seeding;
pub mod task;
pub mod text;

pub use error::{Error, Result};
pub use task::{AttackField, Instance, NeutralRule, Placement, TaskKind, TaskSpec, TriggerTemplate};
pub use text::{detokenize, normalize, tokenize, TokenizedText, MASK_TOKEN, SEP_TOKEN};
