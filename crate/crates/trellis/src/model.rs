//! Core domain types shared by every other module. No I/O here.
//!
//! All types are immutable values once constructed and can be shared freely
//! across threads. Constructors validate the structural invariants; values
//! loaded from disk go through [`Trajectory::validate`] and friends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("problem id must be non-empty")]
    EmptyProblemId,
    #[error("problem statement must be non-empty")]
    EmptyStatement,
    #[error("reasoning step text must be non-empty")]
    EmptyStepText,
    #[error("reasoning step index must be >= 1, got {0}")]
    BadStepIndex(usize),
    #[error("trajectory must contain at least one step")]
    EmptyTrajectory,
    #[error("trajectory step indices must be contiguous 1..T; step {position} has index {index}")]
    NonContiguousSteps { position: usize, index: usize },
    #[error("guideline must contain at least one step")]
    EmptyGuideline,
    #[error("memory entry requires a verified trajectory")]
    UnverifiedTrajectory,
    #[error("model weight must be > 0, got {0}")]
    NonPositiveWeight(f64),
}

/// Which kind of benchmark task a problem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Math,
    Code,
}

/// One benchmark problem. `label` carries the ground-truth answer and is
/// present for training data; `code_tests` holds test programs for code tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub label: Option<String>,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub code_tests: Vec<String>,
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        statement: impl Into<String>,
        task_kind: TaskKind,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        let statement = statement.into();
        if id.is_empty() {
            return Err(ModelError::EmptyProblemId);
        }
        if statement.trim().is_empty() {
            return Err(ModelError::EmptyStatement);
        }
        Ok(Self {
            id,
            statement,
            label: None,
            task_kind,
            code_tests: Vec::new(),
        })
    }

    /// Math problem with a known answer, the usual training-set shape.
    pub fn math(
        id: impl Into<String>,
        statement: impl Into<String>,
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let mut p = Self::new(id, statement, TaskKind::Math)?;
        p.label = Some(label.into());
        Ok(p)
    }

    /// Code problem with attached test programs.
    pub fn code(
        id: impl Into<String>,
        statement: impl Into<String>,
        tests: Vec<String>,
    ) -> Result<Self, ModelError> {
        let mut p = Self::new(id, statement, TaskKind::Code)?;
        p.code_tests = tests;
        Ok(p)
    }
}

/// Provenance of a reasoning step: which pipeline stage produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Cot,
    LabelGuided,
    Tot,
    MemoryGuided,
    BranchProposed,
    BranchRefined,
    Aggregated,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Origin::Cot => "cot",
            Origin::LabelGuided => "label_guided",
            Origin::Tot => "tot",
            Origin::MemoryGuided => "memory_guided",
            Origin::BranchProposed => "branch_proposed",
            Origin::BranchRefined => "branch_refined",
            Origin::Aggregated => "aggregated",
        };
        f.write_str(s)
    }
}

/// One intermediate reasoning step. Step text is opaque free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    /// 1-based position within its trajectory.
    pub index: usize,
    pub text: String,
    pub origin: Origin,
}

impl ReasoningStep {
    pub fn new(index: usize, text: impl Into<String>, origin: Origin) -> Result<Self, ModelError> {
        let text = text.into();
        if index < 1 {
            return Err(ModelError::BadStepIndex(index));
        }
        if text.trim().is_empty() {
            return Err(ModelError::EmptyStepText);
        }
        Ok(Self {
            index,
            text,
            origin,
        })
    }

    /// Same step content re-attributed to a different stage.
    pub fn with_origin(&self, origin: Origin) -> Self {
        Self {
            index: self.index,
            text: self.text.clone(),
            origin,
        }
    }
}

/// An ordered sequence of reasoning steps plus a final answer for one problem.
///
/// `verified` is set by the pipeline once the final answer has been checked
/// against the problem label; only verified trajectories enter memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem_id: String,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: String,
    pub verified: bool,
}

impl Trajectory {
    pub fn new(
        problem_id: impl Into<String>,
        steps: Vec<ReasoningStep>,
        final_answer: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let t = Self {
            problem_id: problem_id.into(),
            steps,
            final_answer: final_answer.into(),
            verified: false,
        };
        t.validate()?;
        Ok(t)
    }

    /// Check the structural invariants; used by constructors and on load.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.steps.is_empty() {
            return Err(ModelError::EmptyTrajectory);
        }
        for (pos, step) in self.steps.iter().enumerate() {
            if step.text.trim().is_empty() {
                return Err(ModelError::EmptyStepText);
            }
            if step.index != pos + 1 {
                return Err(ModelError::NonContiguousSteps {
                    position: pos + 1,
                    index: step.index,
                });
            }
        }
        Ok(())
    }

    pub fn mark_verified(mut self) -> Self {
        self.verified = true;
        self
    }

    /// Number of steps, the T of this trajectory.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Serialize a trajectory into one text record (JSON).
pub fn serialize_trajectory(t: &Trajectory) -> String {
    serde_json::to_string(t).expect("trajectory serialization cannot fail")
}

/// Inverse of [`serialize_trajectory`]; validates invariants on the way in.
pub fn deserialize_trajectory(record: &str) -> Result<Trajectory, ModelError> {
    let t: Trajectory =
        serde_json::from_str(record).map_err(|_| ModelError::EmptyTrajectory)?;
    t.validate()?;
    Ok(t)
}

/// An abstract ordered step plan induced from retrieved trajectories.
///
/// Rewritten variants of one guideline always share its step count; the
/// rewriting contract enforces structural parallelism across branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guideline {
    pub core_problem: String,
    pub steps: Vec<String>,
    pub source_entry_ids: Vec<String>,
}

impl Guideline {
    pub fn new(
        core_problem: impl Into<String>,
        steps: Vec<String>,
        source_entry_ids: Vec<String>,
    ) -> Result<Self, ModelError> {
        if steps.is_empty() || steps.iter().any(|s| s.trim().is_empty()) {
            return Err(ModelError::EmptyGuideline);
        }
        Ok(Self {
            core_problem: core_problem.into(),
            steps,
            source_entry_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Canonical text form: a "Problem:" line followed by numbered step
    /// markers. [`crate::guideline::parse_guideline`] round-trips this.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Problem: {}\n", self.core_problem));
        out.push_str("Chain of Thought:\n");
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("<step {}>: {}\n", i + 1, step));
        }
        out
    }

    /// Just the numbered step lines, used when injecting a guideline into
    /// another method's prompt.
    pub fn render_steps(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("<step {}>: {}\n", i + 1, step));
        }
        out
    }
}

/// A stored unit of reasoning experience: a problem, its verified gold
/// trajectory, and the embedding used for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub entry_id: String,
    pub problem: Problem,
    pub trajectory: Trajectory,
    pub embedding: Vec<f32>,
    /// Which pipeline stage produced the gold trajectory.
    pub stage: Origin,
    /// Monotone insertion counter assigned by the store, 0-based.
    pub created_seq: u64,
    /// Optional dataset/category tag for filtered retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl MemoryEntry {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.entry_id.is_empty() {
            return Err(ModelError::EmptyProblemId);
        }
        if !self.trajectory.verified {
            return Err(ModelError::UnverifiedTrajectory);
        }
        self.trajectory.validate()
    }
}

/// Per-branch working state during multi-branch execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    /// 1-based branch number within 1..=M.
    pub branch_index: usize,
    pub guideline: Guideline,
    pub current_candidate: Option<ReasoningStep>,
    pub refined_candidate: Option<ReasoningStep>,
}

impl BranchState {
    pub fn new(branch_index: usize, guideline: Guideline) -> Self {
        Self {
            branch_index,
            guideline,
            current_candidate: None,
            refined_candidate: None,
        }
    }

    /// The candidate that goes into aggregation: the refined form when
    /// refinement ran, otherwise the raw proposal.
    pub fn effective_candidate(&self) -> Option<&ReasoningStep> {
        self.refined_candidate
            .as_ref()
            .or(self.current_candidate.as_ref())
    }
}

/// Prompt/completion token counts for one chat call, tagged by pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub call_tag: String,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            call_tag: String::new(),
        }
    }

    pub fn tagged(mut self, tag: &str) -> Self {
        self.call_tag = tag.to_string();
        self
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}
