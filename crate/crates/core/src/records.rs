//! Line-delimited JSON records read and written by the `humbr` CLI.
//!
//! Every file holds one JSON object per line. Field order is fixed by the
//! struct definitions below, so re-serializing a parsed canonical line
//! reproduces it byte for byte. Blank lines are ignored on input.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{Candidate, CandidatePool, ConsensusResult, Verdict};
use crate::planner::{Configuration, EnsemblePlan, FrontierPoint};
use crate::riskmodel::{FailureEstimate, ModelErrorProfile};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One candidate of one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRecord {
    pub prompt_id: String,
    pub text: String,
    pub model_id: String,
    pub temperature: f64,
}

/// A prompt to fan out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Selected,
    Abstain,
}

/// Outcome of selection on one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub prompt_id: String,
    pub verdict: VerdictKind,
    pub selected_index: Option<usize>,
    pub selected_text: Option<String>,
    pub winner_score: Option<f64>,
    pub n: usize,
    pub scores: Vec<f64>,
    pub model_ids: Vec<String>,
    pub tau: f64,
    pub alpha: f64,
    pub embedding_model: String,
}

impl ResultRecord {
    pub fn new(pool: &CandidatePool, result: &ConsensusResult, alpha: f64, embedding_model: &str) -> Self {
        let selected = result.verdict.selected();
        Self {
            prompt_id: pool.prompt_id().to_string(),
            verdict: match result.verdict {
                Verdict::Selected(_) => VerdictKind::Selected,
                Verdict::Abstain => VerdictKind::Abstain,
            },
            selected_index: selected,
            selected_text: selected.map(|k| pool.candidates()[k].text.clone()),
            winner_score: result.winner_score,
            n: result.n(),
            scores: result.scores.clone(),
            model_ids: pool.model_ids().into_iter().map(String::from).collect(),
            tau: result.threshold,
            alpha,
            embedding_model: embedding_model.to_string(),
        }
    }

    pub fn is_abstain(&self) -> bool {
        self.verdict == VerdictKind::Abstain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PlanRecord {
    Feasible(EnsemblePlan),
    Infeasible {
        tau: f64,
        epsilon: f64,
        reason: String,
        best: Option<Configuration>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub profiles: Vec<ModelErrorProfile>,
    pub tau: f64,
    #[serde(flatten)]
    pub estimate: FailureEstimate,
}

pub type FrontierRecord = FrontierPoint;

/// Writes `value` as one JSON line.
pub fn write_line<T: Serialize, W: Write + ?Sized>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

pub fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("record types always serialize")
}

/// Parses every nonblank line; the first malformed line aborts.
pub fn read_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Pools parsed from a candidate file, plus the lines that could not be used.
#[derive(Debug, Default)]
pub struct ParsedPools {
    pub pools: Vec<CandidatePool>,
    /// Malformed lines; a pool with any malformed line is dropped.
    pub errors: Vec<RecordError>,
    /// Prompt ids dropped because of malformed lines or invalid candidates.
    pub skipped: Vec<String>,
}

/// Groups candidate lines by `prompt_id` in order of first appearance;
/// candidate indices follow line order within each group.
pub fn read_pools<R: BufRead>(reader: R) -> Result<ParsedPools, RecordError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, (Vec<Candidate>, bool)> = Default::default();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PoolRecord>(&line) {
            Ok(rec) => {
                let entry = groups.entry(rec.prompt_id.clone()).or_insert_with(|| {
                    order.push(rec.prompt_id.clone());
                    (Vec::new(), false)
                });
                entry.0.push(Candidate::new(rec.text, rec.model_id, rec.temperature));
            }
            Err(e) => {
                // attribute the bad line to its pool when the id is recoverable
                if let Some(id) = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("prompt_id").and_then(|p| p.as_str()).map(String::from))
                {
                    let entry = groups.entry(id.clone()).or_insert_with(|| {
                        order.push(id.clone());
                        (Vec::new(), false)
                    });
                    entry.1 = true;
                }
                errors.push(RecordError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                });
            }
        }
    }
    let mut parsed = ParsedPools {
        errors,
        ..Default::default()
    };
    for id in order {
        let (candidates, poisoned) = groups.remove(&id).expect("grouped above");
        if poisoned {
            parsed.skipped.push(id);
            continue;
        }
        match CandidatePool::new(id.clone(), candidates) {
            Ok(pool) => parsed.pools.push(pool),
            Err(e) => {
                parsed.errors.push(RecordError::Malformed {
                    line: 0,
                    message: format!("pool {id}: {e}"),
                });
                parsed.skipped.push(id);
            }
        }
    }
    Ok(parsed)
}

pub fn pool_records(pool: &CandidatePool) -> impl Iterator<Item = PoolRecord> + '_ {
    pool.candidates().iter().map(move |c| PoolRecord {
        prompt_id: pool.prompt_id().to_string(),
        text: c.text.clone(),
        model_id: c.model_id.clone(),
        temperature: c.temperature,
    })
}

pub fn write_pool<W: Write + ?Sized>(out: &mut W, pool: &CandidatePool) -> std::io::Result<()> {
    for rec in pool_records(pool) {
        write_line(out, &rec)?;
    }
    Ok(())
}
