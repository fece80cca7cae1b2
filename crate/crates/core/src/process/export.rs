//! Dataset export in the three post-training schemas.
//!
//! - `sft`: `{prompt, completion}` over preferred actions only, one line per
//!   distinct (state, preferred action) pair.
//! - `dpo`: `{prompt, chosen, rejected}`, one line per tuple.
//! - `rm`: `{state_text, action_plus, action_minus}`, one line per tuple,
//!   using the same state/action text rendering the critic consumes.
//!
//! Prompts are the exact rendered actor prompt for the tuple's state
//! (system message, blank line, user message). Actions are rendered in the
//! canonical `kind: payload` form.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::critic::{critic_action_text, critic_state_text};
use crate::gateway::GenerationConfig;
use crate::mdp::Action;

use super::{CollectedDataset, ProcessError};

/// Export schema selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Sft,
    Dpo,
    Rm,
}

impl ExportFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExportFormat::Sft => "sft",
            ExportFormat::Dpo => "dpo",
            ExportFormat::Rm => "rm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sft" => Some(ExportFormat::Sft),
            "dpo" => Some(ExportFormat::Dpo),
            "rm" => Some(ExportFormat::Rm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpoRecord {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmRecord {
    pub state_text: String,
    pub action_plus: String,
    pub action_minus: String,
}

/// Line counts of one export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportStats {
    pub format: ExportFormat,
    pub tuples: usize,
    pub lines: usize,
}

fn action_text(action: &Action) -> String {
    critic_action_text(action)
}

fn prompt_for(agent: &Agent, state: &crate::mdp::State) -> Result<String, ProcessError> {
    let request = agent
        .render_prompt(state, GenerationConfig::greedy(1))
        .map_err(crate::inference::EpisodeError::from)?;
    Ok(format!("{}\n\n{}", request.system, request.user))
}

/// Writes `dataset` to `path` in the chosen format.
///
/// Refuses to overwrite an existing path unless `force` is set.
pub fn export_dataset(
    dataset: &CollectedDataset,
    format: ExportFormat,
    agent: &Agent,
    path: &Path,
    force: bool,
) -> Result<ExportStats, ProcessError> {
    if path.exists() && !force {
        return Err(ProcessError::PathExists(path.display().to_string()));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut lines = 0usize;
    match format {
        ExportFormat::Sft => {
            let mut seen: BTreeSet<SftRecord> = BTreeSet::new();
            for tuple in &dataset.tuples {
                let record = SftRecord {
                    prompt: prompt_for(agent, &tuple.state)?,
                    completion: action_text(&tuple.preferred),
                };
                if seen.insert(record.clone()) {
                    writeln!(file, "{}", serde_json::to_string(&record)?)?;
                    lines += 1;
                }
            }
        }
        ExportFormat::Dpo => {
            for tuple in &dataset.tuples {
                let record = DpoRecord {
                    prompt: prompt_for(agent, &tuple.state)?,
                    chosen: action_text(&tuple.preferred),
                    rejected: action_text(&tuple.rejected),
                };
                writeln!(file, "{}", serde_json::to_string(&record)?)?;
                lines += 1;
            }
        }
        ExportFormat::Rm => {
            for tuple in &dataset.tuples {
                let record = RmRecord {
                    state_text: critic_state_text(&tuple.state),
                    action_plus: action_text(&tuple.preferred),
                    action_minus: action_text(&tuple.rejected),
                };
                writeln!(file, "{}", serde_json::to_string(&record)?)?;
                lines += 1;
            }
        }
    }
    file.flush()?;
    Ok(ExportStats {
        format,
        tuples: dataset.tuples.len(),
        lines,
    })
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ProcessError> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

pub fn load_sft(path: &Path) -> Result<Vec<SftRecord>, ProcessError> {
    load_jsonl(path)
}

pub fn load_dpo(path: &Path) -> Result<Vec<DpoRecord>, ProcessError> {
    load_jsonl(path)
}

pub fn load_rm(path: &Path) -> Result<Vec<RmRecord>, ProcessError> {
    load_jsonl(path)
}
