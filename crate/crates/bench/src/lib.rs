//! Shared builders for the criterion benchmarks: a small review-style
//! corpus and an untrained model stack with the same shape as the
//! desk-scale experiments, so timings reflect real forward passes.

use pat_core::models::{CausalLm, MlmModel, ModelShape, TextClassifier, Vocab};
use pat_core::task::TaskSpec;

pub fn corpus() -> Vec<String> {
    let nouns = ["acting", "plot", "script", "pacing", "ending", "cast", "dialogue", "score"];
    let adjectives = ["good", "bad", "warm", "cold", "tender", "hollow", "crisp", "stale"];
    let mut lines = Vec::new();
    for (i, noun) in nouns.iter().enumerate() {
        for (j, adj) in adjectives.iter().enumerate() {
            let other = nouns[(i + 1) % nouns.len()];
            let tone = adjectives[(j + 3) % adjectives.len()];
            lines.push(format!("the {noun} is {adj} and the {other} is {tone}."));
        }
    }
    lines
}

pub fn vocab() -> Vocab {
    Vocab::from_corpus(&corpus(), 1).expect("bench corpus vocabulary")
}

pub fn filler() -> MlmModel {
    MlmModel::new(vocab(), ModelShape::default(), 1)
}

pub fn scorer() -> CausalLm {
    CausalLm::new(vocab(), ModelShape::default(), 2)
}

pub fn victim() -> TextClassifier {
    let task = TaskSpec::sentiment();
    TextClassifier::new(vocab(), ModelShape::default(), task.labels.clone(), task.field_count(), 3)
}
