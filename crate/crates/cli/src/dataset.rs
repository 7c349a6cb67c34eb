//! TSV dataset ingestion and the JSONL pairs format consumed by
//! `train-attacker`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pat_core::error::{Error, Result};
use pat_core::task::{Instance, TaskKind, TaskSpec};

use crate::config::DatasetFormat;

fn header_row(first_field: &str) -> bool {
    first_field.eq_ignore_ascii_case("label")
}

/// Reads a TSV dataset. `single_text_tsv` rows are `label<TAB>text`,
/// `pair_tsv` rows are `label<TAB>premise<TAB>hypothesis`. Labels may be
/// names or numeric indices into the task's label list. An optional header
/// row whose first column is `label` is skipped. Instance ids are the
/// 1-based file line numbers.
pub fn load_dataset(path: &Path, format: DatasetFormat, task: &TaskSpec) -> Result<Vec<Instance>> {
    let content = std::fs::read_to_string(path)?;
    let expected = match format {
        DatasetFormat::SingleTextTsv => 2,
        DatasetFormat::PairTsv => 3,
    };
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 && header_row(fields[0]) {
            continue;
        }
        if fields.len() != expected {
            return Err(Error::MalformedRow {
                line: lineno,
                msg: format!("expected {expected} tab-separated fields, got {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::MalformedRow { line: lineno, msg: "empty field".into() });
        }
        let gold = task.resolve_label(fields[0].trim())?;
        let texts: Vec<String> = fields[1..].iter().map(|f| f.trim().to_string()).collect();
        out.push(Instance::new(lineno.to_string(), texts, gold));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// One line of a pairs file: a clean text and a known adversarial rewrite
/// of it. `premise` is required for pair tasks and absent otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<String>,
    pub original_text: String,
    pub adversarial_text: String,
    pub gold_label: String,
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRow {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Lifts pair records into task instances paired with their adversarial
/// texts, the shape the attack-learning trainer consumes.
pub fn pairs_to_instances(
    records: &[PairRecord],
    task: &TaskSpec,
) -> Result<Vec<(Instance, String)>> {
    let mut out = Vec::with_capacity(records.len());
    for (idx, record) in records.iter().enumerate() {
        let lineno = idx + 1;
        let gold = task.resolve_label(&record.gold_label)?;
        let fields = match task.kind {
            TaskKind::SingleText => {
                if record.premise.is_some() {
                    return Err(Error::MalformedRow {
                        line: lineno,
                        msg: "single-text task, but the record carries a premise".into(),
                    });
                }
                vec![record.original_text.clone()]
            }
            TaskKind::TextPair => {
                let premise = record.premise.clone().ok_or_else(|| Error::MalformedRow {
                    line: lineno,
                    msg: "pair task requires a premise field".into(),
                })?;
                vec![premise, record.original_text.clone()]
            }
        };
        let inst = Instance::new(format!("pair:{lineno}"), fields, gold);
        inst.validate(task)?;
        out.push((inst, record.adversarial_text.clone()));
    }
    Ok(out)
}
