//! Run reports: per-problem records, aggregates, the accuracy-cost utility,
//! and table / line-delimited emission.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gold::{BuildOutcome, BuildStage};
use crate::provider::TagTotals;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed report line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Accuracy-cost utility: accuracy (percent) minus a linear token penalty of
/// one point per thousand mean tokens per problem.
pub fn utility(accuracy_percent: f64, mean_tokens_per_problem: f64) -> f64 {
    accuracy_percent - mean_tokens_per_problem / 1000.0
}

/// One evaluated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: String,
    pub correct: bool,
    /// Execution mode or winning stage, for histograms.
    pub mode: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Aggregate metrics over an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<ProblemRecord>,
    pub total: u64,
    pub correct: u64,
    /// Solve rate (math) or pass@1 (code), in percent.
    pub solve_rate_percent: f64,
    pub mean_tokens_per_problem: f64,
    pub utility: f64,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
}

impl RunReport {
    /// Build aggregates from per-problem records.
    pub fn from_records(records: Vec<ProblemRecord>) -> Self {
        let total = records.len() as u64;
        let correct = records.iter().filter(|r| r.correct).count() as u64;
        let total_prompt_tokens: u64 = records.iter().map(|r| r.prompt_tokens).sum();
        let total_completion_tokens: u64 = records.iter().map(|r| r.completion_tokens).sum();
        let solve_rate_percent = if total == 0 {
            0.0
        } else {
            100.0 * correct as f64 / total as f64
        };
        let mean_tokens_per_problem = if total == 0 {
            0.0
        } else {
            (total_prompt_tokens + total_completion_tokens) as f64 / total as f64
        };
        Self {
            records,
            total,
            correct,
            solve_rate_percent,
            mean_tokens_per_problem,
            utility: utility(solve_rate_percent, mean_tokens_per_problem),
            total_prompt_tokens,
            total_completion_tokens,
        }
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>8} {:>10} {:>12}\n",
            "problem", "correct", "tokens", "mode"
        ));
        for r in &self.records {
            out.push_str(&format!(
                "{:<24} {:>8} {:>10} {:>12}\n",
                truncate(&r.id, 24),
                if r.correct { "yes" } else { "no" },
                r.prompt_tokens + r.completion_tokens,
                truncate(&r.mode, 12),
            ));
        }
        out.push_str(&format!(
            "\nsolved {}/{} ({:.2}%)  mean tokens/problem {:.1}  utility {:.2}\n",
            self.correct,
            self.total,
            self.solve_rate_percent,
            self.mean_tokens_per_problem,
            self.utility
        ));
        out
    }

    /// Emit as a line-delimited record stream: one problem line per record,
    /// then one aggregate line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ReportError> {
        for r in &self.records {
            let line = serde_json::json!({"type": "problem", "record": r});
            writeln!(w, "{line}")?;
        }
        let aggregate = serde_json::json!({
            "type": "aggregate",
            "total": self.total,
            "correct": self.correct,
            "solve_rate_percent": self.solve_rate_percent,
            "mean_tokens_per_problem": self.mean_tokens_per_problem,
            "utility": self.utility,
            "total_prompt_tokens": self.total_prompt_tokens,
            "total_completion_tokens": self.total_completion_tokens,
        });
        writeln!(w, "{aggregate}")?;
        Ok(())
    }

    /// Rebuild a report from its line-delimited form. Aggregates are
    /// recomputed from the records and checked against the stored line.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ReportError> {
        let mut records = Vec::new();
        let mut stored_aggregate: Option<serde_json::Value> = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| ReportError::Malformed {
                line: lineno + 1,
                message,
            };
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            match value.get("type").and_then(|t| t.as_str()) {
                Some("problem") => {
                    let record = value
                        .get("record")
                        .cloned()
                        .ok_or_else(|| malformed("missing record".into()))?;
                    records.push(
                        serde_json::from_value(record).map_err(|e| malformed(e.to_string()))?,
                    );
                }
                Some("aggregate") => stored_aggregate = Some(value),
                other => return Err(malformed(format!("unknown record type {other:?}"))),
            }
        }
        let report = Self::from_records(records);
        if let Some(agg) = stored_aggregate {
            let stored_correct = agg.get("correct").and_then(|v| v.as_u64()).unwrap_or(0);
            if stored_correct != report.correct {
                return Err(ReportError::Malformed {
                    line: 0,
                    message: format!(
                        "stored aggregate disagrees with records: correct {} vs {}",
                        stored_correct, report.correct
                    ),
                });
            }
        }
        Ok(report)
    }
}

/// Cumulative success accounting per build stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCumulative {
    pub stage: String,
    pub successes: u64,
    pub cumulative: u64,
    pub cumulative_rate_percent: f64,
}

/// Aggregate view of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub outcomes: Vec<BuildOutcome>,
    pub total: u64,
    pub succeeded: u64,
    /// Winning-stage histogram in fixed stage order.
    pub stage_histogram: BTreeMap<String, u64>,
    /// Cumulative success per stage, in pipeline order.
    pub cumulative: Vec<StageCumulative>,
    pub usage: TagTotals,
}

impl TrainReport {
    pub fn from_outcomes(outcomes: Vec<BuildOutcome>) -> Self {
        let total = outcomes.len() as u64;
        let succeeded = outcomes.iter().filter(|o| o.succeeded).count() as u64;
        let mut stage_histogram: BTreeMap<String, u64> = BTreeMap::new();
        for outcome in &outcomes {
            *stage_histogram
                .entry(outcome.stage.name().to_string())
                .or_default() += 1;
        }
        let order = [
            BuildStage::Cot,
            BuildStage::LabelGuided,
            BuildStage::Tot,
            BuildStage::MemoryGuided,
        ];
        let mut cumulative = Vec::with_capacity(order.len());
        let mut running = 0u64;
        for stage in order {
            let successes = outcomes
                .iter()
                .filter(|o| o.succeeded && o.stage == stage)
                .count() as u64;
            running += successes;
            cumulative.push(StageCumulative {
                stage: stage.name().to_string(),
                successes,
                cumulative: running,
                cumulative_rate_percent: if total == 0 {
                    0.0
                } else {
                    100.0 * running as f64 / total as f64
                },
            });
        }
        let usage = outcomes.iter().fold(TagTotals::default(), |acc, o| TagTotals {
            calls: acc.calls + o.usage.calls,
            prompt_tokens: acc.prompt_tokens + o.usage.prompt_tokens,
            completion_tokens: acc.completion_tokens + o.usage.completion_tokens,
        });
        Self {
            outcomes,
            total,
            succeeded,
            stage_histogram,
            cumulative,
            usage,
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>10} {:>12} {:>10}\n",
            "stage", "solved", "cumulative", "rate"
        ));
        for row in &self.cumulative {
            out.push_str(&format!(
                "{:<16} {:>10} {:>12} {:>9.2}%\n",
                row.stage, row.successes, row.cumulative, row.cumulative_rate_percent
            ));
        }
        out.push_str(&format!(
            "\nbuilt {}/{} gold trajectories; {} chat calls, {} tokens\n",
            self.succeeded,
            self.total,
            self.usage.calls,
            self.usage.total()
        ));
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ReportError> {
        for outcome in &self.outcomes {
            let line = serde_json::json!({"type": "outcome", "record": outcome});
            writeln!(w, "{line}")?;
        }
        let aggregate = serde_json::json!({
            "type": "aggregate",
            "total": self.total,
            "succeeded": self.succeeded,
            "stage_histogram": self.stage_histogram,
            "cumulative": self.cumulative,
            "usage": self.usage,
        });
        writeln!(w, "{aggregate}")?;
        Ok(())
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let cut: String = s.chars().take(max.saturating_sub(1)).collect();
        format!("{cut}…")
    }
}
