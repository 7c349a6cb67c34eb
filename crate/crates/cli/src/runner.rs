//! Wires configuration, datasets and model checkpoints into the attack,
//! training, defense and evaluation pipelines.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pat_core::attack_learning::{build_attack_training_set, train_filler};
use pat_core::attack_sentence::attack_sentence;
use pat_core::attack_word::{attack_word, AttackResult, AttackStatus};
use pat_core::baseline::attack_search;
use pat_core::defense::{adversarial_augment, fine_tune_classifier, train_defended};
use pat_core::eval::{
    run_attack_experiment, sample_instances, InstanceRecord, MetricsReport,
};
use pat_core::lexicon::{AntonymLexicon, SubstitutionLexicon};
use pat_core::models::{CausalLm, MlmModel, ModelShape, TextClassifier, TrainOptions, Vocab};
use pat_core::seeding::derive_seed;
use pat_core::task::{Instance, TaskSpec};

use crate::config::{require_files, AttackLevel, DefenseMethod, RunConfig};
use crate::datagen::{self, GenSummary, Sizes};
use crate::dataset::{load_dataset, load_pairs, pairs_to_instances, PairRecord};
use crate::store::{
    read_records, write_config_snapshot, write_json_pretty, write_jsonl, write_records, ReportFile,
};

/// Hard cap on accepted attack-learning pairs; the trainer is a few-shot
/// procedure and larger sets are truncated with a notice.
pub const MAX_TRAINING_PAIRS: usize = 500;

fn load_victim(cfg: &RunConfig, task: &TaskSpec) -> Result<TextClassifier> {
    let path = cfg.backends.victim_path();
    let victim = TextClassifier::load(&path)
        .with_context(|| format!("loading victim {}", path.display()))?;
    if victim.labels != task.labels {
        bail!(
            "victim labels {:?} do not match task labels {:?}",
            victim.labels,
            task.labels
        );
    }
    if victim.expected_fields != task.field_count() {
        bail!(
            "victim expects {} fields but the task has {}",
            victim.expected_fields,
            task.field_count()
        );
    }
    Ok(victim)
}

fn load_filler(cfg: &RunConfig) -> Result<MlmModel> {
    let path = cfg.backends.filler_path();
    MlmModel::load(&path).with_context(|| format!("loading filler {}", path.display()))
}

fn load_scorer(cfg: &RunConfig) -> Result<CausalLm> {
    let path = cfg.backends.scorer_path();
    CausalLm::load(&path).with_context(|| format!("loading scorer {}", path.display()))
}

fn pair_records(task: &TaskSpec, sample: &[Instance], records: &[InstanceRecord]) -> Vec<PairRecord> {
    sample
        .iter()
        .zip(records)
        .filter(|(_, r)| r.status == AttackStatus::Success)
        .filter_map(|(inst, r)| {
            Some(PairRecord {
                premise: inst.premise(task).map(str::to_string),
                original_text: r.original.clone(),
                adversarial_text: r.adversarial.clone()?,
                gold_label: r.gold.clone(),
            })
        })
        .collect()
}

/// Runs the configured attacker over a seeded sample of the test set and
/// writes records, pairs, report and config snapshot into the output
/// directory.
pub fn run_attack(cfg: &RunConfig) -> Result<ReportFile> {
    let task = cfg.task.build()?;
    let mut needed: Vec<PathBuf> = vec![
        cfg.data.test.clone(),
        cfg.backends.victim_path(),
        cfg.backends.scorer_path(),
    ];
    match cfg.attack.level {
        AttackLevel::Baseline => needed.push(cfg.baseline.lexicon_path.clone()),
        _ => {
            needed.push(cfg.backends.filler_path());
            needed.push(cfg.attack.antonyms.clone());
        }
    }
    require_files(needed.iter().map(PathBuf::as_path))?;

    let pool = load_dataset(&cfg.data.test, cfg.dataset_format(), &task)?;
    let sample = sample_instances(&pool, cfg.eval.n_test, cfg.eval.seed)?;

    let victim = load_victim(cfg, &task)?;
    let scorer = load_scorer(cfg)?;
    let word_cfg = cfg.attack.word_config();

    let output = match cfg.attack.level {
        AttackLevel::Word => {
            let filler = load_filler(cfg)?;
            let antonyms = AntonymLexicon::load(&cfg.attack.antonyms)?;
            run_attack_experiment(
                &sample,
                &task,
                |inst| attack_word(inst, &task, &victim, &filler, &scorer, &antonyms, &word_cfg),
                &scorer,
            )?
        }
        AttackLevel::Sentence => {
            let filler = load_filler(cfg)?;
            let antonyms = AntonymLexicon::load(&cfg.attack.antonyms)?;
            let sent_cfg = cfg.attack.sentence_config();
            run_attack_experiment(
                &sample,
                &task,
                |inst| {
                    attack_sentence(
                        inst, &task, &victim, &scorer, &filler, &scorer, &antonyms, &word_cfg,
                        &sent_cfg,
                    )
                },
                &scorer,
            )?
        }
        AttackLevel::Baseline => {
            let lexicon = SubstitutionLexicon::load(&cfg.baseline.lexicon_path)?;
            let base_cfg = cfg.baseline.config();
            run_attack_experiment(
                &sample,
                &task,
                |inst| attack_search(inst, &task, &victim, &lexicon, &base_cfg),
                &scorer,
            )?
        }
    };

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    write_records(&dir.join("results.jsonl"), &output.records)?;
    write_jsonl(&dir.join("pairs.jsonl"), &pair_records(&task, &sample, &output.records))?;
    let report = ReportFile { config: cfg.clone(), metrics: output.report };
    write_json_pretty(&dir.join("report.json"), &report)?;
    write_config_snapshot(dir, cfg)?;
    Ok(report)
}

fn record_to_result(record: &InstanceRecord, task: &TaskSpec) -> AttackResult {
    let mut result = AttackResult::empty(&record.id, record.status);
    result.adversarial_text = record.adversarial.clone();
    result.edit_positions = record.edits.clone();
    result.victim_queries = record.queries;
    result.pred_before = record.pred_before.as_deref().and_then(|l| task.label_index(l));
    result.pred_after = record.pred_after.as_deref().and_then(|l| task.label_index(l));
    result.adversarial_ppl = record.ppl;
    result
}

/// Recomputes the full metric block from persisted records alone, with the
/// complementarity ratio added when a second record set is given.
pub fn metrics_from_records(
    records: &[InstanceRecord],
    task: &TaskSpec,
    baseline: Option<&[InstanceRecord]>,
) -> Result<MetricsReport> {
    let results: Vec<AttackResult> = records.iter().map(|r| record_to_result(r, task)).collect();
    let ppls: Vec<f64> = records
        .iter()
        .filter(|r| r.status == AttackStatus::Success)
        .filter_map(|r| r.ppl)
        .collect();
    let ppl_mean = if ppls.is_empty() {
        None
    } else {
        Some(ppls.iter().sum::<f64>() / ppls.len() as f64)
    };
    let dis = match baseline {
        None => None,
        Some(base) => {
            let base_results: Vec<AttackResult> =
                base.iter().map(|r| record_to_result(r, task)).collect();
            Some(pat_core::eval::compute_dis(&results, &base_results)?)
        }
    };
    Ok(MetricsReport::from_results(&results, ppl_mean, dis)?)
}

/// Rebuilds the report from stored per-instance records and writes it to
/// the output directory.
pub fn run_evaluate(
    cfg: &RunConfig,
    results_path: &Path,
    baseline_path: Option<&Path>,
) -> Result<ReportFile> {
    let task = cfg.task.build()?;
    let mut needed = vec![results_path.to_path_buf()];
    if let Some(p) = baseline_path {
        needed.push(p.to_path_buf());
    }
    require_files(needed.iter().map(PathBuf::as_path))?;

    let records = read_records(results_path)?;
    let baseline = baseline_path.map(read_records).transpose()?;
    let metrics = metrics_from_records(&records, &task, baseline.as_deref())?;

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let report = ReportFile { config: cfg.clone(), metrics };
    write_json_pretty(&dir.join("report.json"), &report)?;
    write_config_snapshot(dir, cfg)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainAttackerSummary {
    pub pairs_given: usize,
    pub pairs_used: usize,
    pub examples: usize,
    pub skipped_ids: Vec<String>,
    pub losses: Vec<f64>,
    pub out_path: PathBuf,
}

/// Fine-tunes the filler on known adversarial pairs and writes the tuned
/// checkpoint plus its loss trace.
pub fn run_train_attacker(
    cfg: &RunConfig,
    pairs_path: &Path,
    out_dir: &Path,
    epochs: usize,
    learning_rate: f64,
) -> Result<TrainAttackerSummary> {
    let task = cfg.task.build()?;
    require_files([pairs_path, cfg.backends.filler_path().as_path()])?;

    let mut records = load_pairs(pairs_path)?;
    let pairs_given = records.len();
    records.truncate(MAX_TRAINING_PAIRS);
    let pairs = pairs_to_instances(&records, &task)?;
    let build = build_attack_training_set(&pairs, &task)?;

    let mut filler = load_filler(cfg)?;
    let losses = train_filler(
        &mut filler,
        &build.examples,
        epochs,
        learning_rate,
        derive_seed(cfg.attack.seed, "train-attacker"),
    )?;

    std::fs::create_dir_all(out_dir)?;
    let out_path = out_dir.join("filler.json");
    filler.save(&out_path)?;
    let trace: Vec<EpochLoss> =
        losses.iter().enumerate().map(|(i, &loss)| EpochLoss { epoch: i + 1, loss }).collect();
    write_jsonl(&out_dir.join("trace.jsonl"), &trace)?;
    write_config_snapshot(out_dir, cfg)?;
    Ok(TrainAttackerSummary {
        pairs_given,
        pairs_used: records.len(),
        examples: build.examples.len(),
        skipped_ids: build.skipped_ids,
        losses,
        out_path,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseEpochLoss {
    pub epoch: usize,
    pub combined: f64,
    pub classification: Option<f64>,
    pub prompt: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DefendSummary {
    pub method: DefenseMethod,
    pub trace: Vec<DefenseEpochLoss>,
    pub n_attacked: usize,
    pub n_success: usize,
    pub train_size: usize,
    pub out_path: PathBuf,
}

/// Hardens the victim, either by prompt-consistency training or by
/// adversarial augmentation, and writes the defended checkpoint.
pub fn run_defend(cfg: &RunConfig, train_override: Option<&Path>) -> Result<DefendSummary> {
    let task = cfg.task.build()?;
    let train_path = train_override.unwrap_or(&cfg.data.train);
    let mut needed: Vec<PathBuf> = vec![train_path.to_path_buf(), cfg.backends.victim_path()];
    if cfg.defense.method == DefenseMethod::Augment {
        needed.push(cfg.backends.filler_path());
        needed.push(cfg.backends.scorer_path());
        needed.push(cfg.attack.antonyms.clone());
    }
    require_files(needed.iter().map(PathBuf::as_path))?;

    let train = load_dataset(train_path, cfg.dataset_format(), &task)?;
    let mut victim = load_victim(cfg, &task)?;
    let defense_cfg = cfg.defense.config();

    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir)?;
    let out_path = out_dir.join("victim.json");

    let summary = match cfg.defense.method {
        DefenseMethod::Prompt => {
            let trace = train_defended(&mut victim, &train, &task, &defense_cfg)?;
            let rows: Vec<DefenseEpochLoss> = trace
                .combined
                .iter()
                .enumerate()
                .map(|(i, &combined)| DefenseEpochLoss {
                    epoch: i + 1,
                    combined,
                    classification: trace.classification.get(i).copied(),
                    prompt: trace.prompt.get(i).copied(),
                })
                .collect();
            DefendSummary {
                method: DefenseMethod::Prompt,
                trace: rows,
                n_attacked: 0,
                n_success: 0,
                train_size: train.len(),
                out_path: out_path.clone(),
            }
        }
        DefenseMethod::Augment => {
            let filler = load_filler(cfg)?;
            let scorer = load_scorer(cfg)?;
            let antonyms = AntonymLexicon::load(&cfg.attack.antonyms)?;
            let word_cfg =
                pat_core::attack_word::WordAttackConfig { verify: true, ..cfg.attack.word_config() };
            let outcome = adversarial_augment(
                &train,
                |inst| attack_word(inst, &task, &victim, &filler, &scorer, &antonyms, &word_cfg),
                cfg.defense.fraction,
                &task,
                derive_seed(cfg.defense.seed, "defend-augment"),
            )?;
            let losses = fine_tune_classifier(
                &mut victim,
                &outcome.augmented,
                &task,
                cfg.defense.epochs,
                cfg.defense.learning_rate,
                cfg.defense.batch_size,
                cfg.defense.seed,
            )?;
            let rows: Vec<DefenseEpochLoss> = losses
                .iter()
                .enumerate()
                .map(|(i, &combined)| DefenseEpochLoss {
                    epoch: i + 1,
                    combined,
                    classification: None,
                    prompt: None,
                })
                .collect();
            DefendSummary {
                method: DefenseMethod::Augment,
                trace: rows,
                n_attacked: outcome.n_attacked,
                n_success: outcome.n_success,
                train_size: outcome.augmented.len(),
                out_path: out_path.clone(),
            }
        }
    };

    victim.save(&out_path)?;
    write_jsonl(&out_dir.join("trace.jsonl"), &summary.trace)?;
    write_config_snapshot(out_dir, cfg)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy)]
pub struct PretrainOpts {
    pub mlm_epochs: usize,
    pub lm_epochs: usize,
    pub victim_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainOpts {
    fn default() -> Self {
        PretrainOpts {
            mlm_epochs: 30,
            lm_epochs: 30,
            victim_epochs: 8,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainSummary {
    pub vocab_size: usize,
    pub mlm_final_loss: f64,
    pub lm_final_loss: f64,
    pub victim_final_loss: f64,
    pub paths: Vec<PathBuf>,
}

fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let content =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<String> =
        content.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
    if lines.is_empty() {
        bail!("corpus {} is empty", path.display());
    }
    Ok(lines)
}

/// Builds the vocabulary from the corpus, pretrains the filler and scorer
/// language models on it, fine-tunes a fresh victim on the training set,
/// and writes all three checkpoints to the configured backend paths.
pub fn run_pretrain(cfg: &RunConfig, opts: PretrainOpts) -> Result<PretrainSummary> {
    let task = cfg.task.build()?;
    require_files([cfg.data.corpus.as_path(), cfg.data.train.as_path()])?;

    let corpus = read_corpus(&cfg.data.corpus)?;
    let train = load_dataset(&cfg.data.train, cfg.dataset_format(), &task)?;
    let vocab = Vocab::from_corpus(&corpus, 1)?;
    let shape = ModelShape::default();

    let train_opts = |epochs: usize, tag: &str| TrainOptions {
        epochs,
        learning_rate: opts.learning_rate,
        batch_size: opts.batch_size,
        seed: derive_seed(opts.seed, tag),
    };

    let mut filler =
        MlmModel::new(vocab.clone(), shape, derive_seed(opts.seed, "filler-init"));
    let mlm_losses = filler.pretrain(&corpus, train_opts(opts.mlm_epochs, "filler-train"))?;

    let mut scorer = CausalLm::new(vocab.clone(), shape, derive_seed(opts.seed, "scorer-init"));
    let lm_losses = scorer.pretrain(&corpus, train_opts(opts.lm_epochs, "scorer-train"))?;

    let mut victim = TextClassifier::new(
        vocab.clone(),
        shape,
        task.labels.clone(),
        task.field_count(),
        derive_seed(opts.seed, "victim-init"),
    );
    let victim_losses = fine_tune_classifier(
        &mut victim,
        &train,
        &task,
        opts.victim_epochs,
        opts.learning_rate,
        opts.batch_size,
        derive_seed(opts.seed, "victim-train"),
    )?;

    let paths = vec![cfg.backends.filler_path(), cfg.backends.scorer_path(), cfg.backends.victim_path()];
    for path in &paths {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
    }
    filler.save(&paths[0])?;
    scorer.save(&paths[1])?;
    victim.save(&paths[2])?;

    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    Ok(PretrainSummary {
        vocab_size: vocab.len(),
        mlm_final_loss: last(&mlm_losses),
        lm_final_loss: last(&lm_losses),
        victim_final_loss: last(&victim_losses),
        paths,
    })
}

pub fn run_gen_data(root: &Path, seed: u64, sizes: Sizes) -> Result<GenSummary> {
    datagen::generate(root, seed, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pat_core::eval::Counts;

    fn record(id: &str, status: AttackStatus, ppl: Option<f64>) -> InstanceRecord {
        InstanceRecord {
            id: id.into(),
            status,
            original: "the movie is good .".into(),
            adversarial: (status == AttackStatus::Success).then(|| "the movie is cold .".into()),
            gold: "positive".into(),
            pred_before: Some("positive".into()),
            pred_after: (status == AttackStatus::Success).then(|| "negative".into()),
            queries: 5,
            edits: vec![3],
            ppl,
        }
    }

    #[test]
    fn metrics_recompute_purely_from_records() {
        let task = TaskSpec::sentiment();
        let records = vec![
            record("1", AttackStatus::Success, Some(10.0)),
            record("2", AttackStatus::Success, Some(30.0)),
            record("3", AttackStatus::Failed, None),
            record("4", AttackStatus::SkippedMisclassified, None),
        ];
        let report = metrics_from_records(&records, &task, None).unwrap();
        assert_eq!(report.suc, 66.67);
        assert_eq!(report.ppl_mean, Some(20.0));
        assert_eq!(report.acc, 75.0);
        assert_eq!(report.rob, 25.0);
        assert_eq!(
            report.counts,
            Counts { n_sampled: 4, n_correct: 3, n_attacked: 3, n_success: 2, n_skipped: 1 }
        );
        assert_eq!(report.dis, None);
    }

    #[test]
    fn complementarity_needs_matching_ids_and_counts_baseline_failures() {
        let task = TaskSpec::sentiment();
        let ours = vec![
            record("1", AttackStatus::Success, None),
            record("2", AttackStatus::Success, None),
            record("3", AttackStatus::Failed, None),
        ];
        let base = vec![
            record("1", AttackStatus::Failed, None),
            record("2", AttackStatus::Success, None),
            record("3", AttackStatus::Success, None),
        ];
        let report = metrics_from_records(&ours, &task, Some(&base)).unwrap();
        assert_eq!(report.dis, Some(50.0));

        let wrong_ids = vec![record("9", AttackStatus::Failed, None)];
        assert!(metrics_from_records(&ours, &task, Some(&wrong_ids)).is_err());
    }
}
