//! Experience-guided multi-branch reasoning for LLMs.
//!
//! The pipeline has two halves. Training converts labeled problems into
//! verified gold reasoning trajectories via staged escalation (chain of
//! thought, label-guided regeneration, tree exploration, memory-guided
//! generation) and appends every success to an append-only vector memory.
//! Inference retrieves the most similar gold trajectories for a new
//! problem, abstracts them into a reusable guideline, rewrites it into
//! structurally parallel branch variants, and executes the branches step by
//! step with per-step refinement and judge aggregation over a shared
//! accepted prefix, optionally spreading branches across multiple models
//! with weighted voting.
//!
//! Start from the runnable examples (`cargo run -p trellis --example
//! end_to_end_mock`), or from [`bench::Session`] for the train/eval entry
//! points. Everything runs offline against [`provider::MockProvider`];
//! point [`config::Config`] at an OpenAI-compatible endpoint for live runs.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod forest;
pub mod gold;
pub mod guideline;
pub mod memory;
pub mod model;
pub mod prompts;
pub mod provider;
pub mod report;
pub mod tot;
pub mod verifier;

pub use bench::{EvalMode, Session};
pub use config::Config;
pub use forest::{
    weighted_vote, AggregationMode, BaseMethod, ExecConfig, ForestExecutor, ForestOutcome,
    ForestTrace, GuidelineMode,
};
pub use gold::{BuildConfig, BuildOutcome, BuildStage, GoldBuilder};
pub use guideline::{parse_guideline, GuidelineEngine};
pub use memory::{cosine_similarity, EntryDraft, MemoryStore};
pub use model::{
    Guideline, MemoryEntry, Origin, Problem, ReasoningStep, TaskKind, TokenUsage, Trajectory,
};
pub use prompts::{PromptRegistry, TemplateId};
pub use provider::{
    ChatOptions, ChatRequest, ChatResponse, HttpProvider, MockProvider, ModelSpec, Provider,
    ScriptedReply, UsageLedger,
};
pub use report::{utility, RunReport, TrainReport};
pub use verifier::{extract_answer, math_equal, run_code_tests, verify};
