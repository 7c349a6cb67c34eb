//! Result persistence: JSONL per-instance records, the report file, and
//! training traces. Every write goes through an atomic rename.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pat_core::eval::{InstanceRecord, MetricsReport};
use pat_core::models::write_atomic;

use crate::config::RunConfig;

/// The single structured report written by `attack` and `evaluate`: all
/// metrics and counts plus the resolved configuration snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: RunConfig,
    pub metrics: MetricsReport,
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item)?);
        buf.push('\n');
    }
    Ok(buf)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let buf = jsonl(items)?;
    write_atomic(path, buf.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[InstanceRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<InstanceRecord>> {
    read_jsonl(path)
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_string_pretty(value)?;
    buf.push('\n');
    write_atomic(path, buf.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&content)?)
}

pub fn write_config_snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let text = cfg.to_toml()?;
    write_atomic(&dir.join("config.toml"), text.as_bytes())?;
    Ok(())
}

/// Renders a metrics report as the plain table the `report` subcommand
/// prints.
pub fn render_report(report: &ReportFile) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    out.push_str("metric        value\n");
    out.push_str(&format!("Suc   {:>12.2}\n", m.suc));
    match m.ppl_mean {
        Some(p) => out.push_str(&format!("PPL   {:>12.2}\n", p)),
        None => out.push_str("PPL              -\n"),
    }
    match m.dis {
        Some(d) => out.push_str(&format!("Dis   {:>12.2}\n", d)),
        None => out.push_str("Dis              -\n"),
    }
    out.push_str(&format!("Acc   {:>12.2}\n", m.acc));
    out.push_str(&format!("Rob   {:>12.2}\n", m.rob));
    out.push_str(&format!(
        "counts: sampled {} | correct {} | attacked {} | success {} | skipped {}\n",
        m.counts.n_sampled, m.counts.n_correct, m.counts.n_attacked, m.counts.n_success,
        m.counts.n_skipped
    ));
    out
}
