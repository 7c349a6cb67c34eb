use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use pat_bench::{corpus, filler, scorer, victim};
use pat_core::attack_word::{attack_word, WordAttackConfig};
use pat_core::backends::{Classifier, MaskFiller, PerplexityScorer};
use pat_core::lexicon::AntonymLexicon;
use pat_core::prompting::{build_prompt, plan_masks};
use pat_core::{tokenize, Instance, TaskSpec, MASK_TOKEN};

const LINE: &str = "the acting is warm and the plot is tender.";

fn bench_tokenize(c: &mut Criterion) {
    let long = corpus().join(" ");
    let mut group = c.benchmark_group("tokenize");
    group.bench_function("line", |b| b.iter(|| tokenize(black_box(LINE)).unwrap()));
    group.bench_function("corpus", |b| b.iter(|| tokenize(black_box(&long)).unwrap()));
    group.finish();
}

fn bench_prompting(c: &mut Criterion) {
    let task = TaskSpec::sentiment();
    let inst = Instance::new("b0", vec![LINE.into()], "positive");
    let tok = tokenize(LINE).unwrap();
    c.bench_function("prompt/plan_build_strip", |b| {
        b.iter(|| {
            let plans = plan_masks(&inst.id, &tok, 0.15, 1, 7).unwrap();
            let prompt = build_prompt(&inst, &plans[0], &task).unwrap();
            let fills: Vec<String> =
                plans[0].masked_positions.iter().map(|&p| tok.tokens[p].clone()).collect();
            black_box(prompt.strip_trigger(&fills).unwrap())
        })
    });
}

fn bench_models(c: &mut Criterion) {
    let filler = filler();
    let scorer = scorer();
    let victim = victim();
    let fields = vec![LINE.to_string()];
    let mut masked = tokenize(LINE).unwrap().tokens;
    masked[3] = MASK_TOKEN.to_string();

    let mut group = c.benchmark_group("models");
    group.bench_function("fill_slots", |b| {
        b.iter(|| filler.fill_slots(black_box(&masked), 5, 5, 11).unwrap())
    });
    group.bench_function("perplexity", |b| b.iter(|| scorer.perplexity(black_box(LINE)).unwrap()));
    group.bench_function("classify", |b| b.iter(|| victim.classify(black_box(&fields)).unwrap()));
    group.finish();
}

fn bench_word_attack(c: &mut Criterion) {
    let task = TaskSpec::sentiment();
    let filler = filler();
    let scorer = scorer();
    let victim = victim();
    let antonyms = AntonymLexicon::from_pairs([("good", "bad")]);

    let fields = vec![LINE.to_string()];
    let probs = victim.classify(&fields).unwrap().probs;
    let pred = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let inst = Instance::new("b1", fields, task.labels[pred].clone());

    let cfg =
        WordAttackConfig { prompts_per_instance: 10, topk_fill: 5, ..WordAttackConfig::default() };
    c.bench_function("word_attack/ten_prompts", |b| {
        b.iter(|| attack_word(&inst, &task, &victim, &filler, &scorer, &antonyms, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_tokenize, bench_prompting, bench_models, bench_word_attack);
criterion_main!(benches);
