//! Acceptance checks for the toolkit, one test per guarantee: exact metric
//! oracles, a hand chain-rule perplexity check, prompt round trips, the
//! antonym fill filter, query accounting, gradient checks, byte-identical
//! reruns, and directional desk-scale experiments (attack quality, attacker
//! fine-tuning, prompt defense).
//!
//! The desk-scale tests share one lab built under `CARGO_TARGET_TMPDIR`:
//! synthetic data is generated, the tiny filler/scorer/victim stack is
//! pretrained, and every attack and defense leg runs once. Light oracle
//! tests run standalone and stay fast.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pat_cli::config::{AttackLevel, DatasetFormat, RunConfig};
use pat_cli::datagen::{review, Polarity, Sizes};
use pat_cli::dataset::load_dataset;
use pat_cli::runner::{self, PretrainOpts};
use pat_cli::store::read_records;
use pat_core::attack_word::{
    attack_word, filter_fill, AttackResult, AttackStatus, WordAttackConfig,
};
use pat_core::backends::{Classifier, LabelDistribution, PerplexityScorer};
use pat_core::baseline::{attack_search, BaselineConfig};
use pat_core::defense::{
    fine_tune_classifier, prompt_loss_embedding_grads, prompt_loss_from_embeddings,
    train_defended, DefenseConfig,
};
use pat_core::eval::{compute_acc_rob, compute_dis, compute_ppl, compute_suc, InstanceRecord};
use pat_core::fixtures::{BigramScorer, UniformScorer};
use pat_core::lexicon::{AntonymLexicon, SubstitutionLexicon};
use pat_core::models::{CausalLm, MlmModel, ModelShape, TextClassifier, Vocab};
use pat_core::prompting::{build_prompt, plan_masks};
use pat_core::{tokenize, Instance, TaskSpec};

struct Leg {
    report: pat_cli::store::ReportFile,
    records: Vec<InstanceRecord>,
}

struct Lab {
    root: PathBuf,
    cfg: RunConfig,
    word: Leg,
    baseline: Leg,
    word_def: Leg,
    baseline_def: Leg,
    star: Leg,
    pairs_used: usize,
}

static LAB: OnceLock<Lab> = OnceLock::new();

fn lab() -> &'static Lab {
    LAB.get_or_init(build_lab)
}

fn attack_leg(cfg: &RunConfig) -> Leg {
    let report = runner::run_attack(cfg).expect("attack leg");
    let records = read_records(&cfg.output.dir.join("results.jsonl")).expect("leg records");
    Leg { report, records }
}

fn build_lab() -> Lab {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-lab");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).expect("lab root");

    let data = root.join("data");
    runner::run_gen_data(&data, 0, Sizes::default()).expect("gen data");

    let mut cfg = RunConfig::default();
    cfg.data.train = data.join("mr/train.tsv");
    cfg.data.test = data.join("mr/test.tsv");
    cfg.data.corpus = data.join("corpus.txt");
    cfg.backends.victim = root.join("models/victim.json");
    cfg.backends.filler = root.join("models/filler.json");
    cfg.backends.scorer = root.join("models/scorer.json");
    cfg.attack.antonyms = data.join("antonyms.tsv");
    cfg.attack.topk_fill = 5;
    cfg.baseline.lexicon_path = data.join("lexicon.tsv");
    cfg.output.dir = root.join("runs/word");

    runner::run_pretrain(&cfg, PretrainOpts::default()).expect("pretrain");

    let word = attack_leg(&cfg);

    let mut cfg_base = cfg.clone();
    cfg_base.attack.level = AttackLevel::Baseline;
    cfg_base.output.dir = root.join("runs/baseline");
    let baseline = attack_leg(&cfg_base);

    let mut cfg_defend = cfg.clone();
    cfg_defend.output.dir = root.join("models/defended");
    runner::run_defend(&cfg_defend, None).expect("defend");

    let mut cfg_word_def = cfg.clone();
    cfg_word_def.backends.victim = root.join("models/defended/victim.json");
    cfg_word_def.output.dir = root.join("runs/word-def");
    let word_def = attack_leg(&cfg_word_def);

    let mut cfg_base_def = cfg_word_def.clone();
    cfg_base_def.attack.level = AttackLevel::Baseline;
    cfg_base_def.output.dir = root.join("runs/baseline-def");
    let baseline_def = attack_leg(&cfg_base_def);

    let mut cfg_pairs = cfg.clone();
    cfg_pairs.attack.level = AttackLevel::Baseline;
    cfg_pairs.data.test = data.join("mr/train.tsv");
    cfg_pairs.eval.n_test = 400;
    cfg_pairs.output.dir = root.join("runs/pairs-src");
    attack_leg(&cfg_pairs);

    let tuned = runner::run_train_attacker(
        &cfg,
        &root.join("runs/pairs-src/pairs.jsonl"),
        &root.join("models/tuned"),
        8,
        1e-3,
    )
    .expect("train attacker");

    let mut cfg_star = cfg.clone();
    cfg_star.backends.filler = root.join("models/tuned/filler.json");
    cfg_star.output.dir = root.join("runs/word-star");
    let star = attack_leg(&cfg_star);

    Lab {
        root,
        cfg,
        word,
        baseline,
        word_def,
        baseline_def,
        star,
        pairs_used: tuned.pairs_used,
    }
}

fn status_result(id: &str, status: AttackStatus) -> AttackResult {
    AttackResult::empty(id, status)
}

fn random_status(rng: &mut ChaCha8Rng) -> AttackStatus {
    match rng.random_range(0..3u8) {
        0 => AttackStatus::Success,
        1 => AttackStatus::Failed,
        _ => AttackStatus::SkippedMisclassified,
    }
}

/// Fifty results covering all three statuses, the rest drawn at random.
fn synthetic_results(rng: &mut ChaCha8Rng) -> Vec<AttackResult> {
    (0..50)
        .map(|i| {
            let status = match i {
                0 => AttackStatus::Success,
                1 => AttackStatus::Failed,
                2 => AttackStatus::SkippedMisclassified,
                _ => random_status(rng),
            };
            status_result(&format!("r{i}"), status)
        })
        .collect()
}

#[test]
fn metric_recounts_match_and_identity_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _trial in 0..20 {
        let results = synthetic_results(&mut rng);

        let mut s = 0usize;
        let mut f = 0usize;
        let mut k = 0usize;
        for r in &results {
            match r.status {
                AttackStatus::Success => s += 1,
                AttackStatus::Failed => f += 1,
                AttackStatus::SkippedMisclassified => k += 1,
            }
        }
        let n = s + f + k;
        assert_eq!(n, 50);

        let suc = compute_suc(&results).unwrap();
        assert_eq!(suc, 100.0 * s as f64 / (s + f) as f64);

        let (acc, rob) = compute_acc_rob(&results).unwrap();
        assert_eq!(acc, 100.0 * (s + f) as f64 / n as f64);
        assert_eq!(rob, 100.0 * f as f64 / n as f64);

        let (si, ci, ni) = (s as i128, (s + f) as i128, n as i128);
        let rob_num = 100 * (ci - si);
        let rob_den = ni;
        let rhs_num = (100 * ci) * (100 * ci - 100 * si);
        let rhs_den = ni * ci * 100;
        assert_eq!(rob_num * rhs_den, rhs_num * rob_den);

        let baseline: Vec<AttackResult> = results
            .iter()
            .map(|r| status_result(&r.instance_id, random_status(&mut rng)))
            .collect();
        let dis = compute_dis(&results, &baseline).unwrap();
        let mut pat_successes = 0usize;
        let mut exclusive = 0usize;
        for (r, b) in results.iter().zip(&baseline) {
            if r.status == AttackStatus::Success {
                pat_successes += 1;
                if b.status != AttackStatus::Success {
                    exclusive += 1;
                }
            }
        }
        assert_eq!(dis, 100.0 * exclusive as f64 / pat_successes as f64);
    }
    println!("metric recounts: Suc/Acc/Rob/Dis match brute-force counts; Rob = Acc*(1-Suc/100) exactly");
}

#[test]
fn perplexity_matches_hand_chain_rule() {
    let scorer = BigramScorer::new(0.1)
        .with("the", "movie", 0.5)
        .with("movie", "is", 0.25)
        .with("is", "good", 0.8)
        .with("good", ".", 0.4);

    let texts = vec![
        "the movie is good .".to_string(),
        "the movie is bad".to_string(),
        "unseen words here".to_string(),
    ];

    let hand = |probs: &[f64]| -> f64 {
        let product: f64 = probs.iter().product();
        (1.0 / product).powf(1.0 / probs.len() as f64)
    };
    let p1 = hand(&[0.5, 0.25, 0.8, 0.4]);
    let p2 = hand(&[0.5, 0.25, 0.1]);
    let p3 = hand(&[0.1, 0.1]);

    for (text, expected) in texts.iter().zip([p1, p2, p3]) {
        let got = scorer.perplexity(text).unwrap();
        let rel = (got - expected).abs() / expected;
        assert!(rel < 1e-6, "{text}: got {got}, hand value {expected}");
    }

    let mean = compute_ppl(&texts, &scorer).unwrap();
    let expected_mean = (p1 + p2 + p3) / 3.0;
    assert!((mean - expected_mean).abs() / expected_mean < 1e-6);

    let uniform = UniformScorer { vocab_size: 50 };
    let flat = compute_ppl(&texts, &uniform).unwrap();
    assert_eq!(flat, 50.0);

    println!("perplexity: chain-rule values within 1e-6, uniform scorer gives vocab size exactly");
}

fn prompt_texts_for(texts: &[(String, &'static str)], seed: u64) -> Vec<String> {
    let task = TaskSpec::sentiment();
    let mut prompts = Vec::with_capacity(texts.len());
    for (i, (text, gold)) in texts.iter().enumerate() {
        let inst = Instance::new(format!("rt-{i}"), vec![text.clone()], *gold);
        let tok = tokenize(text).unwrap();
        let plans = plan_masks(&inst.id, &tok, 0.15, 1, seed).unwrap();
        let plan = &plans[0];

        let n = tok.tokens.len();
        let expected = ((0.15 * n as f64).round() as usize).max(1);
        assert_eq!(plan.masked_positions.len(), expected, "mask count for {n} tokens");

        let prompt = build_prompt(&inst, plan, &task).unwrap();
        let fills: Vec<String> =
            plan.masked_positions.iter().map(|&p| tok.tokens[p].clone()).collect();
        let restored = prompt.strip_trigger(&fills).unwrap();
        assert_eq!(&restored, text, "round trip for instance {i}");

        prompts.push(prompt.display_text().unwrap());
    }
    prompts
}

#[test]
fn prompt_round_trip_restores_text() {
    let generate = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..1000)
            .map(|i| {
                let (polarity, gold) = if i % 2 == 0 {
                    (Polarity::Positive, "positive")
                } else {
                    (Polarity::Negative, "negative")
                };
                (review(&mut rng, polarity), gold)
            })
            .collect::<Vec<_>>()
    };

    let texts = generate();
    let first = prompt_texts_for(&texts, 99);
    let texts_again = generate();
    assert_eq!(texts, texts_again);
    let second = prompt_texts_for(&texts_again, 99);
    assert_eq!(first, second);

    println!("prompt round trip: 1000 instances restored byte-exactly, mask counts match, reruns identical");
}

const ANTONYM_PAIRS: [(&str, &str); 50] = [
    ("good", "bad"),
    ("hot", "cold"),
    ("big", "small"),
    ("fast", "slow"),
    ("happy", "sad"),
    ("light", "dark"),
    ("up", "down"),
    ("open", "closed"),
    ("early", "late"),
    ("hard", "soft"),
    ("strong", "weak"),
    ("clean", "dirty"),
    ("rich", "poor"),
    ("thick", "thin"),
    ("wide", "narrow"),
    ("high", "low"),
    ("long", "short"),
    ("new", "old"),
    ("young", "elderly"),
    ("full", "empty"),
    ("loud", "quiet"),
    ("sharp", "dull"),
    ("smooth", "rough"),
    ("sweet", "sour"),
    ("wet", "dry"),
    ("brave", "cowardly"),
    ("cheap", "expensive"),
    ("deep", "shallow"),
    ("safe", "dangerous"),
    ("tight", "loose"),
    ("bright", "dim"),
    ("heavy", "weightless"),
    ("true", "false"),
    ("near", "far"),
    ("always", "never"),
    ("inner", "outer"),
    ("major", "minor"),
    ("best", "worst"),
    ("win", "lose"),
    ("give", "take"),
    ("love", "hate"),
    ("accept", "reject"),
    ("agree", "disagree"),
    ("appear", "vanish"),
    ("arrive", "depart"),
    ("attack", "defend"),
    ("begin", "end"),
    ("bless", "curse"),
    ("build", "destroy"),
    ("buy", "sell"),
];

const SYNONYM_PAIRS: [(&str, &str); 50] = [
    ("good", "great"),
    ("big", "large"),
    ("small", "tiny"),
    ("happy", "glad"),
    ("fast", "quick"),
    ("smart", "clever"),
    ("sad", "unhappy"),
    ("angry", "mad"),
    ("begin", "start"),
    ("end", "finish"),
    ("buy", "purchase"),
    ("speak", "talk"),
    ("look", "glance"),
    ("shut", "close"),
    ("silent", "quiet"),
    ("simple", "easy"),
    ("hard", "difficult"),
    ("rich", "wealthy"),
    ("poor", "broke"),
    ("strange", "odd"),
    ("famous", "renowned"),
    ("brave", "bold"),
    ("calm", "peaceful"),
    ("messy", "untidy"),
    ("neat", "tidy"),
    ("real", "genuine"),
    ("fake", "phony"),
    ("huge", "enormous"),
    ("little", "petite"),
    ("old", "ancient"),
    ("new", "modern"),
    ("cold", "chilly"),
    ("hot", "scorching"),
    ("wet", "damp"),
    ("dry", "arid"),
    ("dark", "gloomy"),
    ("bright", "radiant"),
    ("loud", "noisy"),
    ("thin", "slim"),
    ("thick", "dense"),
    ("quick", "rapid"),
    ("slow", "sluggish"),
    ("weak", "feeble"),
    ("strong", "mighty"),
    ("clean", "spotless"),
    ("dirty", "filthy"),
    ("cheap", "inexpensive"),
    ("dear", "beloved"),
    ("wide", "broad"),
    ("narrow", "slender"),
];

#[test]
fn antonym_filter_rejects_antonyms_accepts_synonyms() {
    let lexicon = AntonymLexicon::from_pairs(ANTONYM_PAIRS);

    for (a, b) in ANTONYM_PAIRS {
        assert!(!filter_fill(a, b, &lexicon), "{a}/{b} must be rejected");
        assert!(!filter_fill(b, a, &lexicon), "{b}/{a} must be rejected");
    }
    for (a, b) in SYNONYM_PAIRS {
        assert!(filter_fill(a, b, &lexicon), "{a}/{b} must be accepted");
        assert!(filter_fill(b, a, &lexicon), "{b}/{a} must be accepted");
    }
    println!("antonym filter: 50 antonym pairs rejected both ways, 50 synonym pairs accepted");
}

struct CountingVictim<'a> {
    inner: &'a dyn Classifier,
    calls: AtomicU64,
}

impl<'a> CountingVictim<'a> {
    fn new(inner: &'a dyn Classifier) -> Self {
        CountingVictim { inner, calls: AtomicU64::new(0) }
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Classifier for CountingVictim<'_> {
    fn num_labels(&self) -> usize {
        self.inner.num_labels()
    }

    fn classify(&self, fields: &[String]) -> pat_core::Result<LabelDistribution> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.classify(fields)
    }
}

#[test]
fn query_accounting_is_exact() {
    let lab = lab();
    let task = TaskSpec::sentiment();

    let budget = 1 + lab.cfg.attack.prompts_per_instance as u64;
    let mut attacked = 0usize;
    for r in &lab.word.records {
        assert!(r.queries <= budget, "instance {} used {} queries", r.id, r.queries);
        if r.status != AttackStatus::SkippedMisclassified {
            attacked += 1;
        }
    }
    assert!(attacked > 0);

    let victim = TextClassifier::load(&lab.cfg.backends.victim).unwrap();
    let filler = MlmModel::load(&lab.cfg.backends.filler).unwrap();
    let scorer = CausalLm::load(&lab.cfg.backends.scorer).unwrap();
    let antonyms = AntonymLexicon::load(&lab.cfg.attack.antonyms).unwrap();
    let instances = load_dataset(&lab.cfg.data.test, DatasetFormat::SingleTextTsv, &task).unwrap();

    let silent = WordAttackConfig { verify: false, topk_fill: 5, ..WordAttackConfig::default() };
    for inst in &instances[..5] {
        let counter = CountingVictim::new(&victim);
        let result =
            attack_word(inst, &task, &counter, &filler, &scorer, &antonyms, &silent).unwrap();
        assert_eq!(counter.calls(), 0, "no-victim mode queried the victim");
        assert_eq!(result.victim_queries, 0);
        assert_eq!(result.status, AttackStatus::Failed);
        assert!(!result.unverified_candidates.is_empty());
    }

    let lexicon = SubstitutionLexicon::load(&lab.cfg.baseline.lexicon_path).unwrap();
    let search_cfg = BaselineConfig { top_candidates: lab.cfg.baseline.top_candidates };
    for inst in &instances[..25] {
        let counter = CountingVictim::new(&victim);
        let result = attack_search(inst, &task, &counter, &lexicon, &search_cfg).unwrap();
        assert_eq!(counter.calls(), result.victim_queries, "recorded queries for {}", inst.id);

        let n = tokenize(inst.attack_text(&task)).unwrap().tokens.len() as u64;
        match result.status {
            AttackStatus::SkippedMisclassified => assert_eq!(result.victim_queries, 1),
            _ => {
                let deletions = if n > 1 { n } else { 0 };
                assert_eq!(
                    result.victim_queries,
                    1 + deletions + result.candidates_tried as u64,
                    "arithmetic for {}",
                    inst.id
                );
            }
        }
    }

    println!("query accounting: word attack within 1+{} budget and 0 unverified; search matches 1+n+candidates", lab.cfg.attack.prompts_per_instance);
}

#[test]
fn word_attack_beats_search_on_perplexity() {
    let lab = lab();
    let word = &lab.word.report.metrics;
    let baseline = &lab.baseline.report.metrics;

    assert!(word.suc >= 15.0, "word attack success {} below 15%", word.suc);
    let word_ppl = word.ppl_mean.expect("word ppl");
    let baseline_ppl = baseline.ppl_mean.expect("baseline ppl");
    assert!(
        word_ppl < baseline_ppl,
        "word attack PPL {word_ppl} not below search baseline PPL {baseline_ppl}"
    );

    println!(
        "desk-scale attack: word Suc {:.1}% PPL {:.1} vs search Suc {:.1}% PPL {:.1}",
        word.suc, word_ppl, baseline.suc, baseline_ppl
    );
}

#[test]
fn tuned_filler_lifts_success_rate() {
    let lab = lab();
    assert!(lab.pairs_used <= 500, "used {} pairs", lab.pairs_used);

    let before = lab.word.report.metrics.suc;
    let after = lab.star.report.metrics.suc;
    assert!(
        after - before >= 5.0,
        "tuned filler Suc {after} not at least 5 points over {before}"
    );

    println!(
        "attacker fine-tuning: Suc {before:.1}% -> {after:.1}% from {} pairs",
        lab.pairs_used
    );
}

#[test]
fn prompt_defense_raises_robustness() {
    let lab = lab();

    let legs = [
        ("word", &lab.word.report.metrics, &lab.word_def.report.metrics),
        ("search", &lab.baseline.report.metrics, &lab.baseline_def.report.metrics),
    ];
    for (name, plain, defended) in legs {
        assert!(
            defended.rob - plain.rob >= 5.0,
            "{name}: defended Rob {} vs undefended {}",
            defended.rob,
            plain.rob
        );
        assert!(
            plain.acc - defended.acc <= 2.0,
            "{name}: clean accuracy dropped from {} to {}",
            plain.acc,
            defended.acc
        );
    }

    let corpus: Vec<String> = (0..8)
        .flat_map(|i| {
            vec![
                format!("the plot is good and the acting is fine {i}"),
                format!("the plot is bad and the acting is poor {i}"),
            ]
        })
        .collect();
    let vocab = Vocab::from_corpus(&corpus, 1).unwrap();
    let task = TaskSpec::sentiment();
    let train: Vec<Instance> = corpus
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let gold = if i % 2 == 0 { "positive" } else { "negative" };
            Instance::new(format!("t{i}"), vec![text.clone()], gold)
        })
        .collect();

    let fresh = || {
        TextClassifier::new(
            vocab.clone(),
            ModelShape::default(),
            task.labels.clone(),
            task.field_count(),
            77,
        )
    };

    let mut plain_ft = fresh();
    let losses = fine_tune_classifier(&mut plain_ft, &train, &task, 4, 1e-3, 2, 9).unwrap();

    let mut unit_alpha = fresh();
    let cfg = DefenseConfig {
        alpha: 1.0,
        epochs: 4,
        learning_rate: 1e-3,
        batch_size: 2,
        seed: 9,
        ..DefenseConfig::default()
    };
    let trace = train_defended(&mut unit_alpha, &train, &task, &cfg).unwrap();

    assert_eq!(trace.combined, losses);
    assert_eq!(trace.combined, trace.classification);
    let probe = vec!["the plot is good and the acting is fine 0".to_string()];
    assert_eq!(
        plain_ft.classify(&probe).unwrap().probs,
        unit_alpha.classify(&probe).unwrap().probs
    );

    println!(
        "defense: Rob word {:.1}->{:.1}, search {:.1}->{:.1}, Acc {:.1}->{:.1}; alpha=1 equals plain fine-tuning",
        lab.word.report.metrics.rob,
        lab.word_def.report.metrics.rob,
        lab.baseline.report.metrics.rob,
        lab.baseline_def.report.metrics.rob,
        lab.word.report.metrics.acc,
        lab.word_def.report.metrics.acc,
    );
}

#[test]
fn prompt_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = 4;
    let dim = 16;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..pairs).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    };
    let e_p = draw(&mut rng);
    let e_x = draw(&mut rng);

    let (g_p, g_x) = prompt_loss_embedding_grads(&e_p, &e_x).unwrap();

    let eps = 1e-5;
    let check = |side: &[Vec<f64>], other: &[Vec<f64>], grads: &[Vec<f64>], p_side: bool| {
        for i in 0..pairs {
            for j in 0..dim {
                let mut plus = side.to_vec();
                let mut minus = side.to_vec();
                plus[i][j] += eps;
                minus[i][j] -= eps;
                let (lp, lm) = if p_side {
                    (
                        prompt_loss_from_embeddings(&plus, other).unwrap(),
                        prompt_loss_from_embeddings(&minus, other).unwrap(),
                    )
                } else {
                    (
                        prompt_loss_from_embeddings(other, &plus).unwrap(),
                        prompt_loss_from_embeddings(other, &minus).unwrap(),
                    )
                };
                let fd = (lp - lm) / (2.0 * eps);
                let g = grads[i][j];
                let tol = 1e-4 * fd.abs().max(g.abs()).max(1e-8);
                assert!((fd - g).abs() <= tol, "coord ({i},{j}): fd {fd}, grad {g}");
            }
        }
    };
    check(&e_p, &e_x, &g_p, true);
    check(&e_x, &e_p, &g_x, false);

    println!("gradient check: prompt-loss grads match central differences within 1e-4 on both sides");
}

fn run_pat(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_pat"))
        .args(args)
        .status()
        .expect("spawn pat binary");
    assert!(status.success(), "pat {args:?} exited with {status}");
}

fn snapshot(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|name| fs::read(dir.join(name)).expect("output file")).collect()
}

#[test]
fn attack_and_evaluate_reruns_are_byte_identical() {
    let lab = lab();

    let mut cfg = lab.cfg.clone();
    cfg.eval.n_test = 60;
    cfg.output.dir = lab.root.join("runs/det");
    let cfg_path = lab.root.join("det.toml");
    fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let cfg_arg = cfg_path.to_str().unwrap();

    let out = cfg.output.dir.clone();
    let files = ["results.jsonl", "pairs.jsonl", "report.json"];
    run_pat(&["attack", "--config", cfg_arg]);
    let first = snapshot(&out, &files);
    run_pat(&["attack", "--config", cfg_arg]);
    let second = snapshot(&out, &files);
    for (name, (a, b)) in files.iter().zip(first.iter().zip(&second)) {
        assert_eq!(a, b, "attack rerun changed {name}");
    }

    let results_arg = out.join("results.jsonl");
    let eval_out = lab.root.join("runs/det-eval");
    let eval_args = [
        "evaluate",
        "--config",
        cfg_arg,
        "--results",
        results_arg.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ];
    run_pat(&eval_args);
    let eval_first = snapshot(&eval_out, &["report.json"]);
    run_pat(&eval_args);
    let eval_second = snapshot(&eval_out, &["report.json"]);
    assert_eq!(eval_first, eval_second, "evaluate rerun changed report.json");

    println!("determinism: attack and evaluate reruns reproduced results and reports byte for byte");
}
