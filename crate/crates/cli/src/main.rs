use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use pat_cli::config::{AttackLevel, DefenseMethod, RunConfig};
use pat_cli::datagen::Sizes;
use pat_cli::runner;
use pat_cli::store::{read_report, render_report, ReportFile};

#[derive(Parser)]
#[command(
    name = "pat",
    version,
    about = "Prompt-based adversarial attacks on text classifiers, and the matching defenses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the run configuration file.
    #[arg(long, default_value = "run.toml")]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus, datasets and lexicons.
    GenData {
        /// Directory the data files are written into.
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Sizes::default().mr_train)]
        train_size: usize,
        #[arg(long, default_value_t = Sizes::default().mr_test)]
        test_size: usize,
    },
    /// Pretrain the filler and scorer on the corpus and fine-tune a victim.
    Pretrain {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = runner::PretrainOpts::default().mlm_epochs)]
        mlm_epochs: usize,
        #[arg(long, default_value_t = runner::PretrainOpts::default().lm_epochs)]
        lm_epochs: usize,
        #[arg(long, default_value_t = runner::PretrainOpts::default().victim_epochs)]
        victim_epochs: usize,
        #[arg(long, default_value_t = runner::PretrainOpts::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = runner::PretrainOpts::default().seed)]
        seed: u64,
    },
    /// Attack a sampled test set and write records, pairs and a report.
    Attack {
        #[command(flatten)]
        config: ConfigArg,
        /// Attack flavor: word, sentence or baseline.
        #[arg(long)]
        level: Option<AttackLevel>,
        /// `off` emits candidates without ever querying the victim.
        #[arg(long)]
        verify: Option<Switch>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample size drawn from the test set.
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine-tune the filler on known adversarial pairs.
    TrainAttacker {
        #[command(flatten)]
        config: ConfigArg,
        /// JSONL file of {original_text, adversarial_text, gold_label} records.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
    },
    /// Harden the victim classifier.
    Defend {
        #[command(flatten)]
        config: ConfigArg,
        /// Weight of the classification loss; 1 - alpha weights the prompt loss.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        method: Option<DefenseMethod>,
        /// Training set override.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from stored per-instance records.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Records produced by `attack`.
        #[arg(long)]
        results: PathBuf,
        /// Records of the comparison attacker, enabling the Dis metric.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a stored report as a table.
    Report {
        /// Path to a report.json produced by `attack` or `evaluate`.
        #[arg(long)]
        input: PathBuf,
    },
}

fn print_report(report: &ReportFile) {
    print!("{}", render_report(report));
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, seed, train_size, test_size } => {
            let sizes = Sizes { mr_train: train_size, mr_test: test_size, ..Sizes::default() };
            let summary = runner::run_gen_data(&out, seed, sizes)?;
            println!("wrote {} files ({} corpus lines):", summary.files.len(), summary.corpus_lines);
            for file in summary.files {
                println!("  {}", file.display());
            }
        }
        Command::Pretrain { config, mlm_epochs, lm_epochs, victim_epochs, learning_rate, seed } => {
            let cfg = RunConfig::load(&config.config)?;
            let opts = runner::PretrainOpts {
                mlm_epochs,
                lm_epochs,
                victim_epochs,
                learning_rate,
                seed,
                ..runner::PretrainOpts::default()
            };
            let summary = runner::run_pretrain(&cfg, opts)?;
            println!(
                "vocab {} | filler loss {:.4} | scorer loss {:.4} | victim loss {:.4}",
                summary.vocab_size,
                summary.mlm_final_loss,
                summary.lm_final_loss,
                summary.victim_final_loss
            );
            for path in summary.paths {
                println!("  {}", path.display());
            }
        }
        Command::Attack { config, level, verify, seed, n_test, out } => {
            let mut cfg = RunConfig::load(&config.config)?;
            if let Some(level) = level {
                cfg.attack.level = level;
            }
            if let Some(verify) = verify {
                cfg.attack.verify = verify == Switch::On;
            }
            if let Some(seed) = seed {
                cfg.attack.seed = seed;
            }
            if let Some(n_test) = n_test {
                cfg.eval.n_test = n_test;
            }
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            cfg.validate()?;
            let report = runner::run_attack(&cfg)?;
            print_report(&report);
            println!("outputs in {}", cfg.output.dir.display());
        }
        Command::TrainAttacker { config, pairs, out, epochs, learning_rate } => {
            let cfg = RunConfig::load(&config.config)?;
            let summary = runner::run_train_attacker(&cfg, &pairs, &out, epochs, learning_rate)?;
            if summary.pairs_given > summary.pairs_used {
                println!(
                    "note: {} pairs given, training capped at the first {}",
                    summary.pairs_given,
                    summary.pairs_used
                );
            }
            if !summary.skipped_ids.is_empty() {
                println!("note: {} pairs had no usable edits and were skipped", summary.skipped_ids.len());
            }
            for (i, loss) in summary.losses.iter().enumerate() {
                println!("epoch {} loss {:.4}", i + 1, loss);
            }
            println!("tuned filler written to {}", summary.out_path.display());
        }
        Command::Defend { config, alpha, method, train, out } => {
            let mut cfg = RunConfig::load(&config.config)?;
            if let Some(alpha) = alpha {
                cfg.defense.alpha = alpha;
            }
            if let Some(method) = method {
                cfg.defense.method = method;
            }
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            cfg.validate()?;
            let summary = runner::run_defend(&cfg, train.as_deref())?;
            if summary.method == DefenseMethod::Augment {
                println!(
                    "augmented: attacked {} instances, {} successes, training set now {}",
                    summary.n_attacked, summary.n_success, summary.train_size
                );
            }
            for row in &summary.trace {
                match (row.classification, row.prompt) {
                    (Some(c), Some(p)) => println!(
                        "epoch {} combined {:.4} classification {:.4} prompt {:.4}",
                        row.epoch, row.combined, c, p
                    ),
                    _ => println!("epoch {} loss {:.4}", row.epoch, row.combined),
                }
            }
            println!("defended victim written to {}", summary.out_path.display());
        }
        Command::Evaluate { config, results, baseline, out } => {
            let mut cfg = RunConfig::load(&config.config)?;
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            cfg.validate()?;
            let report = runner::run_evaluate(&cfg, &results, baseline.as_deref())?;
            print_report(&report);
            println!("report written to {}", cfg.output.dir.join("report.json").display());
        }
        Command::Report { input } => {
            let report = read_report(&input)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
