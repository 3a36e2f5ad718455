//! Experiment orchestration: drive training and evaluation over datasets and
//! assemble reports.
//!
//! Problems run sequentially in dataset order, which keeps scripted-mock
//! runs byte-reproducible end to end.

use crate::forest::{BaseMethod, ExecConfig, ForestExecutor, ForestTrace};
use crate::gold::{BuildConfig, GoldBuilder};
use crate::memory::MemoryStore;
use crate::model::Problem;
use crate::prompts::PromptRegistry;
use crate::provider::{ChatOptions, Provider, UsageLedger};
use crate::report::{ProblemRecord, RunReport, TrainReport};
use crate::verifier::verify;

/// How each evaluation problem is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Full multi-branch stepwise execution.
    Forest,
    /// Single-path guideline injection into a base method.
    Inject(BaseMethod),
}

/// Shared context for train/eval runs.
pub struct Session<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptRegistry,
    pub options: ChatOptions,
    pub ledger: &'a UsageLedger,
}

impl<'a> Session<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        prompts: &'a PromptRegistry,
        options: ChatOptions,
        ledger: &'a UsageLedger,
    ) -> Self {
        Self {
            provider,
            prompts,
            options,
            ledger,
        }
    }

    /// Build gold trajectories for every problem, appending successes to the
    /// store. Per-problem failures land in the report, never abort the batch.
    pub fn run_train(
        &self,
        problems: &[Problem],
        store: &mut MemoryStore,
        cfg: &BuildConfig,
        dataset_tag: Option<&str>,
    ) -> TrainReport {
        let builder = GoldBuilder::new(
            self.provider,
            self.prompts,
            self.options.clone(),
            cfg.clone(),
            self.ledger,
        )
        .with_dataset_tag(dataset_tag.map(str::to_string));
        let mut outcomes = Vec::with_capacity(problems.len());
        for problem in problems {
            let outcome = builder.build_gold(problem, store);
            if let Some(diag) = &outcome.diagnostic {
                log::warn!("training failed for {}: {diag}", problem.id);
            }
            outcomes.push(outcome);
        }
        TrainReport::from_outcomes(outcomes)
    }

    /// Evaluate every problem against the store; answers are verified
    /// programmatically and per-problem errors are recorded as incorrect.
    /// Returns the report and, in forest mode, one trace per problem.
    pub fn run_eval(
        &self,
        problems: &[Problem],
        store: &MemoryStore,
        cfg: &ExecConfig,
        mode: EvalMode,
    ) -> (RunReport, Vec<ForestTrace>) {
        let executor = ForestExecutor::new(
            self.provider,
            self.prompts,
            self.options.clone(),
            cfg.clone(),
            self.ledger,
        );
        let mode_label = match mode {
            EvalMode::Forest => "forest".to_string(),
            EvalMode::Inject(base) => format!("inject_{base:?}").to_lowercase(),
        };
        let mut records = Vec::with_capacity(problems.len());
        let mut traces = Vec::new();
        for problem in problems {
            let usage_before = self.ledger.totals();
            let (answer, diagnostic) = match mode {
                EvalMode::Forest => match executor.run_forest(problem, store) {
                    Ok(outcome) => {
                        let answer = outcome.answer.clone();
                        traces.push(outcome.trace);
                        (Some(answer), None)
                    }
                    Err(failure) => {
                        traces.push(*failure.partial);
                        (None, Some(failure.error.to_string()))
                    }
                },
                EvalMode::Inject(base) => {
                    match executor.guideline_injection(problem, store, base) {
                        Ok(answer) => (Some(answer), None),
                        Err(e) => (None, Some(e.to_string())),
                    }
                }
            };
            let usage_after = self.ledger.totals();

            let (correct, diagnostic) = match (&answer, diagnostic) {
                (Some(answer), None) => match verify(problem, answer) {
                    Ok(ok) => (ok, None),
                    Err(e) => (false, Some(e.to_string())),
                },
                (_, diagnostic) => (false, diagnostic),
            };
            records.push(ProblemRecord {
                id: problem.id.clone(),
                correct,
                mode: mode_label.clone(),
                prompt_tokens: usage_after.prompt_tokens - usage_before.prompt_tokens,
                completion_tokens: usage_after.completion_tokens
                    - usage_before.completion_tokens,
                answer,
                diagnostic,
            });
        }
        (RunReport::from_records(records), traces)
    }
}
