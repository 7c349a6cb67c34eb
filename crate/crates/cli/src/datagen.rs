//! Deterministic synthetic data for desk-scale experiments: a movie-review
//! corpus whose sentiment vocabulary splits into frequent words and rare
//! variants, review datasets, a small premise/hypothesis dataset, the
//! substitution lexicon for the search baseline, and an antonym list.
//!
//! The frequency split is what makes the lab measurable: the substitution
//! lexicon only offers rare variants, so search-baseline rewrites sit in
//! low-probability regions of the language model, while mask fills drawn
//! from that same model favor frequent words.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pat_core::models::write_atomic;
use pat_core::seeding::derive_seed;

pub const COMMON_POS: [&str; 15] = [
    "good", "great", "fine", "nice", "solid", "warm", "smart", "fresh", "sharp", "strong",
    "bright", "lively", "crisp", "rich", "bold",
];

/// Index-aligned antonyms of `COMMON_POS`.
pub const COMMON_NEG: [&str; 15] = [
    "bad", "poor", "awful", "nasty", "shaky", "cold", "dumb", "stale", "blunt", "weak", "dull",
    "flat", "soggy", "thin", "timid",
];

pub const RARE_POS: [&str; 10] = [
    "sublime", "radiant", "luminous", "stirring", "masterful", "exquisite", "dazzling", "soulful",
    "vibrant", "gripping",
];

/// Index-aligned antonyms of `RARE_POS`.
pub const RARE_NEG: [&str; 10] = [
    "dreary", "dismal", "leaden", "turgid", "clumsy", "insipid", "lifeless", "grating",
    "plodding", "vapid",
];

pub const NOUNS: [&str; 15] = [
    "movie", "film", "story", "plot", "acting", "script", "pacing", "music", "ending", "cast",
    "humor", "dialogue", "drama", "scene", "tone",
];

const RARE_ADJ_PROB: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn pick_nouns(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    let mut pool: Vec<&str> = NOUNS.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

fn adjective(rng: &mut ChaCha8Rng, polarity: Polarity) -> &'static str {
    let rare = rng.random_bool(RARE_ADJ_PROB);
    match (polarity, rare) {
        (Polarity::Positive, false) => pick(rng, &COMMON_POS),
        (Polarity::Positive, true) => pick(rng, &RARE_POS),
        (Polarity::Negative, false) => pick(rng, &COMMON_NEG),
        (Polarity::Negative, true) => pick(rng, &RARE_NEG),
    }
}

fn end_mark(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.1) {
        "!"
    } else {
        "."
    }
}

/// One synthetic review in the style of a lowercased snippet dataset.
/// Templates range from two to four adjective slots, so part of the corpus
/// stays flippable with a single edit while the longer reviews carry enough
/// redundant polarity for a careful classifier to resist small edits.
pub fn review(rng: &mut ChaCha8Rng, polarity: Polarity) -> String {
    let a = |rng: &mut ChaCha8Rng| adjective(rng, polarity);
    let template = rng.random_range(0..12u8);
    let n = pick_nouns(rng, 5);
    let stop = end_mark(rng);
    match template {
        0 => format!("the {} is {} and the {} is {}{stop}", n[0], a(rng), n[1], a(rng)),
        1 => format!("a {} {} with a {} {}{stop}", a(rng), n[0], a(rng), n[1]),
        2 => format!("this {} feels {}, and the {} seems {}{stop}", n[0], a(rng), n[1], a(rng)),
        3 => format!(
            "the {} is {}, the {} is {} and the {} is {}{stop}",
            n[0],
            a(rng),
            n[1],
            a(rng),
            n[2],
            a(rng)
        ),
        4 => format!("{} {}, {} {} and a {} {}{stop}", a(rng), n[0], a(rng), n[1], a(rng), n[2]),
        5 => format!("it is a {} {} with {} {}{stop}", a(rng), n[0], a(rng), n[1]),
        6 => format!("the {} stays {} while the {} turns {}{stop}", n[0], a(rng), n[1], a(rng)),
        7 => format!(
            "a {} {} and a {} {} carry this {} {}{stop}",
            a(rng),
            n[0],
            a(rng),
            n[1],
            a(rng),
            n[2]
        ),
        8 => format!(
            "the {} is {}, the {} is {}, the {} is {} and the {} is {}{stop}",
            n[0],
            a(rng),
            n[1],
            a(rng),
            n[2],
            a(rng),
            n[3],
            a(rng)
        ),
        9 => format!(
            "a {} {} with {} {}, {} {} and {} {}{stop}",
            a(rng),
            n[0],
            a(rng),
            n[1],
            a(rng),
            n[2],
            a(rng),
            n[3]
        ),
        10 => format!(
            "the {} seems {} and the {} feels {}, with a {} {} and a {} {}{stop}",
            n[0],
            a(rng),
            n[1],
            a(rng),
            a(rng),
            n[2],
            a(rng),
            n[3]
        ),
        _ => format!(
            "{} {}, {} {}, {} {} and {} {} fill this {}{stop}",
            a(rng),
            n[0],
            a(rng),
            n[1],
            a(rng),
            n[2],
            a(rng),
            n[3],
            n[4]
        ),
    }
}

/// A corpus line that opens with one of the default sentiment triggers and
/// continues in the matching polarity, teaching the masked LM what follows
/// each trigger. The continuation repeats the trigger adjective most of the
/// time, which concentrates trigger-conditioned fills on that word.
fn trigger_echo(rng: &mut ChaCha8Rng, polarity: Polarity) -> String {
    let (opener, keyword) = match polarity {
        Polarity::Negative => ("It is a bad movie", "bad"),
        Polarity::Positive => ("It is a good movie", "good"),
    };
    let common: &[&str] = match polarity {
        Polarity::Positive => &COMMON_POS,
        Polarity::Negative => &COMMON_NEG,
    };
    let adj = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.7) {
            keyword
        } else {
            pick(rng, common)
        }
    };
    let n = pick_nouns(rng, 2);
    let (first, second) = (adj(rng), adj(rng));
    format!("{opener}, the {} is {} and the {} is {}.", n[0], first, n[1], second)
}

const SUBJECTS: [(&str, &str); 6] = [
    ("a man", "a person"),
    ("a woman", "a person"),
    ("a child", "a kid"),
    ("a dog", "an animal"),
    ("a runner", "someone"),
    ("a singer", "someone"),
];

const ACTIVITIES: [(&str, &str, &str); 5] = [
    ("is riding a motorcycle", "is on a motorcycle", "is sleeping on a couch"),
    ("is reading a book", "is looking at a book", "is swimming in a pool"),
    ("is cooking dinner", "is making a meal", "is running a race"),
    ("plays a guitar", "makes music", "is washing a car"),
    ("is walking in the park", "is outside", "is sitting in a cinema"),
];

const EXTRAS: [&str; 4] = ["after work", "on a sunny day", "with a friend", "before the show"];

/// One synthetic premise/hypothesis row: (label, premise, hypothesis).
pub fn inference_row(rng: &mut ChaCha8Rng) -> (String, String, String) {
    let (subject, general) = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
    let (activity, paraphrase, conflict) = ACTIVITIES[rng.random_range(0..ACTIVITIES.len())];
    let premise = format!("{subject} {activity}.");
    match rng.random_range(0..3u8) {
        0 => ("entailment".into(), premise, format!("{general} {paraphrase}.")),
        1 => ("contradiction".into(), premise, format!("{subject} {conflict}.")),
        _ => {
            let extra = EXTRAS[rng.random_range(0..EXTRAS.len())];
            ("neutral".into(), premise, format!("{general} {paraphrase} {extra}."))
        }
    }
}

/// How much of everything `generate` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sizes {
    pub mr_train: usize,
    pub mr_test: usize,
    pub echo_per_polarity: usize,
    pub snli_train: usize,
    pub snli_test: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes { mr_train: 2000, mr_test: 400, echo_per_polarity: 400, snli_train: 240, snli_test: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub files: Vec<PathBuf>,
    pub corpus_lines: usize,
}

fn review_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let polarity = if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
            let label = if polarity == Polarity::Positive { "1" } else { "0" };
            format!("{label}\t{}", review(rng, polarity))
        })
        .collect()
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut buf = lines.join("\n");
    buf.push('\n');
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_atomic(path, buf.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Common adjectives below this index get cross-polarity substitution
/// candidates; the rest offer only same-polarity variants. Partial coverage
/// leaves most reviews with polarity words the search attack cannot flip.
pub const OPPOSITE_COVERED: usize = 7;

fn substitution_rows() -> Vec<String> {
    let mut rows = Vec::new();
    let full = |same: &[&str; 10], opposite: &[&str; 10], i: usize| {
        format!(
            "{}:{:.2},{}:{:.2},{}:{:.2},{}:{:.2},{}:{:.2}",
            same[i % 10],
            0.92,
            same[(i + 3) % 10],
            0.88,
            opposite[i % 10],
            0.84,
            opposite[(i + 4) % 10],
            0.80,
            opposite[(i + 7) % 10],
            0.76
        )
    };
    let same_only = |same: &[&str; 10], i: usize| {
        format!("{}:{:.2},{}:{:.2}", same[i % 10], 0.92, same[(i + 3) % 10], 0.88)
    };
    for (i, word) in COMMON_POS.iter().enumerate() {
        let entry = if i < OPPOSITE_COVERED {
            full(&RARE_POS, &RARE_NEG, i)
        } else {
            same_only(&RARE_POS, i)
        };
        rows.push(format!("{word}\t{entry}"));
    }
    for (i, word) in COMMON_NEG.iter().enumerate() {
        let entry = if i < OPPOSITE_COVERED {
            full(&RARE_NEG, &RARE_POS, i)
        } else {
            same_only(&RARE_NEG, i)
        };
        rows.push(format!("{word}\t{entry}"));
    }
    rows.push("movie\tfilm:0.95,drama:0.60".into());
    rows.push("film\tmovie:0.95,drama:0.60".into());
    rows.push("story\tplot:0.90,drama:0.60".into());
    rows
}

fn antonym_rows() -> Vec<String> {
    let mut rows = Vec::new();
    for (pos, neg) in COMMON_POS.iter().zip(COMMON_NEG.iter()) {
        rows.push(format!("{pos}\t{neg}"));
    }
    for (pos, neg) in RARE_POS.iter().zip(RARE_NEG.iter()) {
        rows.push(format!("{pos}\t{neg}"));
    }
    rows
}

/// Writes the whole data directory: corpus, review and inference datasets,
/// substitution lexicon and antonym list. Deterministic in `seed`.
pub fn generate(root: &Path, seed: u64, sizes: Sizes) -> Result<GenSummary> {
    let mut files = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mr-train"));
    let train_rows = review_rows(&mut rng, sizes.mr_train);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "mr-test"));
    let test_rows = review_rows(&mut rng, sizes.mr_test);

    let mut corpus: Vec<String> = train_rows
        .iter()
        .map(|row| row.split_once('\t').expect("label column").1.to_string())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "echo"));
    for _ in 0..sizes.echo_per_polarity {
        corpus.push(trigger_echo(&mut rng, Polarity::Negative));
        corpus.push(trigger_echo(&mut rng, Polarity::Positive));
    }

    let snli = |stream: &str, n: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
        (0..n)
            .map(|_| {
                let (label, premise, hypothesis) = inference_row(&mut rng);
                format!("{label}\t{premise}\t{hypothesis}")
            })
            .collect::<Vec<_>>()
    };

    let outputs: Vec<(PathBuf, Vec<String>)> = vec![
        (root.join("mr/train.tsv"), train_rows),
        (root.join("mr/test.tsv"), test_rows),
        (root.join("corpus.txt"), corpus.clone()),
        (root.join("snli/train.tsv"), snli("snli-train", sizes.snli_train)),
        (root.join("snli/test.tsv"), snli("snli-test", sizes.snli_test)),
        (root.join("lexicon.tsv"), substitution_rows()),
        (root.join("antonyms.tsv"), antonym_rows()),
    ];
    for (path, lines) in &outputs {
        write_lines(path, lines)?;
        files.push(path.clone());
    }
    Ok(GenSummary { files, corpus_lines: corpus.len() })
}
