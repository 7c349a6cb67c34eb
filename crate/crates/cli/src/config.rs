//! Declarative run configuration: one TOML file drives every subcommand,
//! with command-line flags overriding individual fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pat_core::attack_sentence::SentenceAttackConfig;
use pat_core::attack_word::WordAttackConfig;
use pat_core::baseline::BaselineConfig;
use pat_core::defense::DefenseConfig;
use pat_core::task::{NeutralRule, TaskSpec, TriggerTemplate};

/// Environment variable that relocates relative model checkpoint paths.
pub const MODEL_DIR_ENV: &str = "PAT_MODEL_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    SingleTextTsv,
    PairTsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "lower")]
pub enum AttackLevel {
    Word,
    Sentence,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "lower")]
pub enum DefenseMethod {
    Prompt,
    Augment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    /// `sentiment` or `nli`.
    pub kind: String,
    pub neutral_rule: NeutralRule,
    /// Optional per-label trigger pattern overrides.
    pub triggers: BTreeMap<String, String>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            kind: "sentiment".into(),
            neutral_rule: NeutralRule::default(),
            triggers: BTreeMap::new(),
        }
    }
}

impl TaskBlock {
    pub fn build(&self) -> Result<TaskSpec> {
        let mut task = match self.kind.as_str() {
            "sentiment" => TaskSpec::sentiment(),
            "nli" => TaskSpec::nli(self.neutral_rule),
            other => bail!("unknown task kind `{other}` (expected `sentiment` or `nli`)"),
        };
        for (label, pattern) in &self.triggers {
            if !task.labels.iter().any(|l| l == label) {
                bail!("trigger override for unknown label `{label}`");
            }
            let template = TriggerTemplate::parse(pattern, task.kind)
                .with_context(|| format!("trigger pattern for label `{label}`"))?;
            task.trigger_map.insert(label.clone(), template);
        }
        Ok(task)
    }

    pub fn default_format(&self) -> DatasetFormat {
        if self.kind == "nli" {
            DatasetFormat::PairTsv
        } else {
            DatasetFormat::SingleTextTsv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    pub train: PathBuf,
    pub test: PathBuf,
    /// Plain-text pretraining corpus, one document per line.
    pub corpus: PathBuf,
    pub format: Option<DatasetFormat>,
}

impl Default for DataBlock {
    fn default() -> Self {
        DataBlock {
            train: "data/mr/train.tsv".into(),
            test: "data/mr/test.tsv".into(),
            corpus: "data/corpus.txt".into(),
            format: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsBlock {
    pub victim: PathBuf,
    pub filler: PathBuf,
    /// Autoregressive LM checkpoint, used for both scoring and continuation.
    pub scorer: PathBuf,
    pub device: String,
}

impl Default for BackendsBlock {
    fn default() -> Self {
        BackendsBlock {
            victim: "models/victim.json".into(),
            filler: "models/filler.json".into(),
            scorer: "models/scorer.json".into(),
            device: "cpu".into(),
        }
    }
}

impl BackendsBlock {
    /// Checkpoint path with the model-directory environment override applied.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            return path.to_path_buf();
        }
        match std::env::var_os(MODEL_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn victim_path(&self) -> PathBuf {
        self.resolve(&self.victim)
    }

    pub fn filler_path(&self) -> PathBuf {
        self.resolve(&self.filler)
    }

    pub fn scorer_path(&self) -> PathBuf {
        self.resolve(&self.scorer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentenceBlock {
    pub max_new_tokens: usize,
    pub min_tokens: usize,
}

impl Default for SentenceBlock {
    fn default() -> Self {
        let cfg = SentenceAttackConfig::default();
        SentenceBlock { max_new_tokens: cfg.max_new_tokens, min_tokens: cfg.min_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackBlock {
    pub level: AttackLevel,
    pub prompts_per_instance: usize,
    pub mask_ratio: f64,
    pub topk_fill: usize,
    pub verify: bool,
    pub seed: u64,
    pub antonyms: PathBuf,
    pub sentence: SentenceBlock,
}

impl Default for AttackBlock {
    fn default() -> Self {
        let cfg = WordAttackConfig::default();
        AttackBlock {
            level: AttackLevel::Word,
            prompts_per_instance: cfg.prompts_per_instance,
            mask_ratio: cfg.mask_ratio,
            topk_fill: cfg.topk_fill,
            verify: cfg.verify,
            seed: cfg.seed,
            antonyms: "data/antonyms.tsv".into(),
            sentence: SentenceBlock::default(),
        }
    }
}

impl AttackBlock {
    pub fn word_config(&self) -> WordAttackConfig {
        WordAttackConfig {
            prompts_per_instance: self.prompts_per_instance,
            mask_ratio: self.mask_ratio,
            topk_fill: self.topk_fill,
            verify: self.verify,
            seed: self.seed,
        }
    }

    pub fn sentence_config(&self) -> SentenceAttackConfig {
        SentenceAttackConfig {
            max_new_tokens: self.sentence.max_new_tokens,
            min_tokens: self.sentence.min_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineBlock {
    pub lexicon_path: PathBuf,
    pub top_candidates: usize,
}

impl Default for BaselineBlock {
    fn default() -> Self {
        BaselineBlock {
            lexicon_path: "data/lexicon.tsv".into(),
            top_candidates: BaselineConfig::default().top_candidates,
        }
    }
}

impl BaselineBlock {
    pub fn config(&self) -> BaselineConfig {
        BaselineConfig { top_candidates: self.top_candidates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseBlock {
    pub alpha: f64,
    pub method: DefenseMethod,
    pub prompt_mask_ratio: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fraction of the training set attacked when augmenting.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for DefenseBlock {
    fn default() -> Self {
        let cfg = DefenseConfig::default();
        DefenseBlock {
            alpha: cfg.alpha,
            method: DefenseMethod::Prompt,
            prompt_mask_ratio: cfg.prompt_mask_ratio,
            epochs: 30,
            learning_rate: 1e-4,
            batch_size: cfg.batch_size,
            fraction: 0.25,
            seed: cfg.seed,
        }
    }
}

impl DefenseBlock {
    pub fn config(&self) -> DefenseConfig {
        DefenseConfig {
            alpha: self.alpha,
            prompt_mask_ratio: self.prompt_mask_ratio,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub n_test: usize,
    pub seed: u64,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { n_test: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: "runs/out".into() }
    }
}

/// Fully resolved experiment configuration. Every run writes this struct,
/// defaults expanded and overrides applied, next to its outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: TaskBlock,
    pub data: DataBlock,
    pub backends: BackendsBlock,
    pub attack: AttackBlock,
    pub baseline: BaselineBlock,
    pub defense: DefenseBlock,
    pub eval: EvalBlock,
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.kind != "sentiment" && self.task.kind != "nli" {
            bail!("task.kind must be `sentiment` or `nli`, got `{}`", self.task.kind);
        }
        if self.backends.device != "cpu" {
            bail!("backends.device `{}` is not available; only `cpu` is", self.backends.device);
        }
        if self.attack.prompts_per_instance == 0 {
            bail!("attack.prompts_per_instance must be positive");
        }
        if !(self.attack.mask_ratio > 0.0 && self.attack.mask_ratio <= 1.0) {
            bail!("attack.mask_ratio must lie in (0, 1]");
        }
        if self.attack.topk_fill == 0 {
            bail!("attack.topk_fill must be positive");
        }
        if self.baseline.top_candidates == 0 {
            bail!("baseline.top_candidates must be positive");
        }
        if !(self.defense.alpha >= 0.0 && self.defense.alpha <= 1.0) {
            bail!("defense.alpha must lie in [0, 1]");
        }
        if !(self.defense.prompt_mask_ratio > 0.0 && self.defense.prompt_mask_ratio <= 1.0) {
            bail!("defense.prompt_mask_ratio must lie in (0, 1]");
        }
        if !(self.defense.fraction > 0.0 && self.defense.fraction <= 1.0) {
            bail!("defense.fraction must lie in (0, 1]");
        }
        if self.defense.batch_size == 0 {
            bail!("defense.batch_size must be positive");
        }
        if self.eval.n_test == 0 {
            bail!("eval.n_test must be positive");
        }
        Ok(())
    }

    pub fn dataset_format(&self) -> DatasetFormat {
        self.data.format.unwrap_or_else(|| self.task.default_format())
    }

    /// Serialized form written next to run outputs.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Fails with the offending path when any input file is missing.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for path in paths {
        if !path.is_file() {
            bail!("required file {} does not exist", path.display());
        }
    }
    Ok(())
}
