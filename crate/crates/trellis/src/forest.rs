//! Stepwise multi-branch inference.
//!
//! Retrieval produces gold examples, induction abstracts them into one
//! guideline, rewriting fans it out into M structurally parallel branches,
//! and execution walks the branches step by step: each branch proposes a
//! candidate for step t against the shared accepted prefix, candidates are
//! refined, and a judge (or weighted vote across models) picks the accepted
//! step. Branching never forks the accepted trajectory: every branch sees
//! the identical prefix at every step.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{GuidelineEngine, GuidelineError};
use crate::memory::{MemoryError, MemoryStore};
use crate::model::{BranchState, Guideline, Origin, Problem, ReasoningStep};
use crate::prompts::{
    placeholder, render_answer_list, render_previous_steps, PromptRegistry, TemplateId,
};
use crate::provider::{ChatOptions, ModelSpec, Provider, ProviderError, TagTotals, UsageLedger};
use crate::tot::{TotParams, TotSearch};
use crate::verifier::extract_answer;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("memory store is empty; run training first")]
    EmptyStore,
    #[error("collaboration requires one model per branch: {expected} branches, {got} models")]
    CollaborationSize { expected: usize, got: usize },
    #[error("score matrix shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model weight must be > 0, got {0}")]
    NonPositiveWeight(f64),
    #[error("no answer marker in conclusion reply")]
    AnswerExtractionFailed,
    #[error("empty reply from provider during {stage}")]
    EmptyReply { stage: String },
}

/// A failed run carries whatever trace had accumulated.
#[derive(Debug)]
pub struct ForestRunError {
    pub error: ForestError,
    pub partial: Box<ForestTrace>,
}

impl std::fmt::Display for ForestRunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for ForestRunError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Pick one accepted step per reasoning step (the default).
    Stepwise,
    /// Run branches independently and judge only their final outputs.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidelineMode {
    /// Induce one guideline, rewrite it into M variants.
    Rewrite,
    /// Induce every branch's guideline independently.
    InducePerBranch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Number of parallel branches M.
    pub branches: usize,
    pub refinement_enabled: bool,
    pub aggregation_mode: AggregationMode,
    /// One model per branch; enables weighted voting at each aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collaboration: Option<Vec<ModelSpec>>,
    /// Retries for empty proposal/refine/conclusion replies.
    pub max_step_retries: u32,
    /// Top-k for retrieval.
    pub retrieval_k: usize,
    pub guideline_mode: GuidelineMode,
    /// Restrict retrieval to entries with this tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_filter: Option<String>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            branches: 3,
            refinement_enabled: true,
            aggregation_mode: AggregationMode::Stepwise,
            collaboration: None,
            max_step_retries: 1,
            retrieval_k: 3,
            guideline_mode: GuidelineMode::Rewrite,
            category_filter: None,
        }
    }
}

/// Everything observable about one step of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepTrace {
    pub index: usize,
    pub proposed: Vec<ReasoningStep>,
    pub refined: Vec<ReasoningStep>,
    /// Raw judge reply, or a synthesized note when no judge call ran.
    pub verdict: String,
    /// 1-based chosen candidate number.
    pub chosen: usize,
    pub accepted: ReasoningStep,
}

/// Full record of one multi-branch run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForestTrace {
    pub problem_id: String,
    pub mode: String,
    pub guidelines: Vec<Guideline>,
    pub steps: Vec<StepTrace>,
    /// Judge verdict over whole branches (final-aggregation mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_verdict: Option<String>,
    pub conclusion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Per-tag token usage for this run.
    pub usage: BTreeMap<String, TagTotals>,
}

#[derive(Debug, Clone)]
pub struct ForestOutcome {
    pub answer: String,
    pub trace: ForestTrace,
}

/// Base method for single-path guideline injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMethod {
    Cot,
    React,
    Tot,
}

static VERDICT_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)answer\s*(\d+)\s*is\s*the\s*best").unwrap());
static CANDIDATE_SCORE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)candidate\s*(\d+)\s*[:\-]\s*(\d+(?:\.\d+)?)").unwrap());

/// Weighted vote over candidates: returns the 1-based candidate number with
/// the largest sum of weight * score, ties broken by the lowest number.
///
/// `scores[l][c]` is model l's confidence for candidate c; `weights[l]` its
/// reliability weight. The argmax is invariant under positive scaling of
/// either the scores or the weights.
pub fn weighted_vote(scores: &[Vec<f64>], weights: &[f64]) -> Result<usize, ForestError> {
    if scores.is_empty() {
        return Err(ForestError::ShapeMismatch("no score rows".into()));
    }
    if scores.len() != weights.len() {
        return Err(ForestError::ShapeMismatch(format!(
            "{} score rows vs {} weights",
            scores.len(),
            weights.len()
        )));
    }
    let candidates = scores[0].len();
    if candidates == 0 {
        return Err(ForestError::ShapeMismatch("no candidates".into()));
    }
    for (l, row) in scores.iter().enumerate() {
        if row.len() != candidates {
            return Err(ForestError::ShapeMismatch(format!(
                "row {l} has {} scores, expected {candidates}",
                row.len()
            )));
        }
    }
    for &w in weights {
        if !(w > 0.0) {
            return Err(ForestError::NonPositiveWeight(w));
        }
    }
    let mut best = 0usize;
    let mut best_sum = f64::NEG_INFINITY;
    for c in 0..candidates {
        let sum: f64 = scores.iter().zip(weights).map(|(row, w)| w * row[c]).sum();
        if sum > best_sum {
            best_sum = sum;
            best = c;
        }
    }
    Ok(best + 1)
}

pub struct ForestExecutor<'a> {
    provider: &'a dyn Provider,
    prompts: &'a PromptRegistry,
    options: ChatOptions,
    cfg: ExecConfig,
    ledger: &'a UsageLedger,
}

impl<'a> ForestExecutor<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        prompts: &'a PromptRegistry,
        options: ChatOptions,
        cfg: ExecConfig,
        ledger: &'a UsageLedger,
    ) -> Self {
        Self {
            provider,
            prompts,
            options,
            cfg,
            ledger,
        }
    }

    pub fn config(&self) -> &ExecConfig {
        &self.cfg
    }

    fn chat_as(&self, tag: &str, model_id: &str, prompt: &str) -> Result<String, ForestError> {
        let mut attempts = 0;
        loop {
            let resp = self
                .provider
                .chat(&self.options.request_for_model(model_id, prompt))?;
            self.ledger.record(tag, &resp.usage);
            if !resp.content.trim().is_empty() {
                return Ok(resp.content);
            }
            attempts += 1;
            if attempts > self.cfg.max_step_retries {
                return Err(ForestError::EmptyReply {
                    stage: tag.to_string(),
                });
            }
            log::warn!("empty {tag} reply; retrying ({attempts}/{})", self.cfg.max_step_retries);
        }
    }

    fn chat(&self, tag: &str, prompt: &str) -> Result<String, ForestError> {
        let model_id = self.options.model_id.clone();
        self.chat_as(tag, &model_id, prompt)
    }

    /// Model id driving a given branch (1-based).
    fn branch_model(&self, branch_index: usize) -> String {
        match &self.cfg.collaboration {
            Some(specs) => specs[branch_index - 1].model_id.clone(),
            None => self.options.model_id.clone(),
        }
    }

    /// Propose one candidate step for a branch against the shared prefix.
    pub fn propose_step(
        &self,
        problem: &Problem,
        accepted_prefix: &[ReasoningStep],
        guideline_step: &str,
        step_index: usize,
        model_id: &str,
    ) -> Result<ReasoningStep, ForestError> {
        let prompt = self.prompts.render(
            TemplateId::GuidelineExecution,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::PREVIOUS_STEPS, &render_previous_steps(accepted_prefix)),
                (placeholder::CURRENT_GUIDELINE_STEP, guideline_step),
            ],
        );
        let reply = self.chat_as("propose", model_id, &prompt)?;
        Ok(ReasoningStep::new(step_index, reply.trim(), Origin::BranchProposed)
            .expect("non-empty reply"))
    }

    /// One self-correction pass over a candidate. Passes the candidate
    /// through untouched (zero calls) when refinement is disabled.
    pub fn refine_step(
        &self,
        problem: &Problem,
        guideline_step: &str,
        candidate: &ReasoningStep,
        model_id: &str,
    ) -> Result<ReasoningStep, ForestError> {
        if !self.cfg.refinement_enabled {
            return Ok(candidate.clone());
        }
        let prompt = self.prompts.render(
            TemplateId::Refine,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::CURRENT_STEP, guideline_step),
                (placeholder::RESULT, candidate.text.as_str()),
            ],
        );
        let reply = self.chat_as("refine", model_id, &prompt)?;
        Ok(ReasoningStep::new(candidate.index, reply.trim(), Origin::BranchRefined)
            .expect("non-empty reply"))
    }

    /// Judge-select one of the candidates. With a single candidate there is
    /// no judge call; an unparseable or out-of-range verdict falls back to
    /// candidate 1 with a warning.
    pub fn aggregate_step(
        &self,
        problem: &Problem,
        candidates: &[ReasoningStep],
    ) -> Result<(usize, ReasoningStep, String), ForestError> {
        assert!(!candidates.is_empty(), "aggregation needs at least one candidate");
        if candidates.len() == 1 {
            let accepted = candidates[0].with_origin(Origin::Aggregated);
            return Ok((1, accepted, "single candidate".to_string()));
        }
        let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
        let prompt = self.prompts.render(
            TemplateId::Aggregation,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::ANSWER_LIST, &render_answer_list(&texts)),
            ],
        );
        let verdict = self.chat("aggregate", &prompt)?;
        let chosen = parse_verdict(&verdict, candidates.len()).unwrap_or_else(|| {
            log::warn!("unparseable or out-of-range judge verdict; falling back to candidate 1");
            1
        });
        let accepted = candidates[chosen - 1].with_origin(Origin::Aggregated);
        Ok((chosen, accepted, verdict))
    }

    /// Collaboration aggregation: every model scores all candidates 0-10,
    /// the weighted vote picks the accepted one.
    fn collaborative_vote(
        &self,
        problem: &Problem,
        candidates: &[ReasoningStep],
        specs: &[ModelSpec],
    ) -> Result<(usize, ReasoningStep, String), ForestError> {
        if candidates.len() == 1 {
            let accepted = candidates[0].with_origin(Origin::Aggregated);
            return Ok((1, accepted, "single candidate".to_string()));
        }
        let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
        let prompt = self.prompts.render(
            TemplateId::CollabScore,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::ANSWER_LIST, &render_answer_list(&texts)),
            ],
        );
        let mut scores: Vec<Vec<f64>> = Vec::with_capacity(specs.len());
        let mut verdict_parts: Vec<String> = Vec::with_capacity(specs.len());
        for spec in specs {
            let reply = self.chat_as("vote", &spec.model_id, &prompt)?;
            scores.push(parse_candidate_scores(&reply, candidates.len()));
            verdict_parts.push(format!("{}: {}", spec.model_id, reply.trim()));
        }
        let weights: Vec<f64> = specs.iter().map(|s| s.weight).collect();
        let chosen = weighted_vote(&scores, &weights)?;
        let accepted = candidates[chosen - 1].with_origin(Origin::Aggregated);
        let verdict = format!(
            "weighted vote -> candidate {chosen} | {}",
            verdict_parts.join(" | ")
        );
        Ok((chosen, accepted, verdict))
    }

    fn aggregate(
        &self,
        problem: &Problem,
        candidates: &[ReasoningStep],
    ) -> Result<(usize, ReasoningStep, String), ForestError> {
        match &self.cfg.collaboration {
            Some(specs) => self.collaborative_vote(problem, candidates, specs),
            None => self.aggregate_step(problem, candidates),
        }
    }

    /// Summarize the accepted trajectory into a final answer.
    pub fn conclude(
        &self,
        problem: &Problem,
        accepted: &[ReasoningStep],
    ) -> Result<(String, String), ForestError> {
        assert!(!accepted.is_empty(), "conclusion needs at least one accepted step");
        let prompt = self.prompts.render(
            TemplateId::Conclusion,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::PREVIOUS_STEPS, &render_previous_steps(accepted)),
            ],
        );
        let raw = self.chat("conclude", &prompt)?;
        let answer = extract_answer(&raw).ok_or(ForestError::AnswerExtractionFailed)?;
        Ok((answer, raw))
    }

    /// Full retrieval-guided multi-branch run.
    pub fn run_forest(
        &self,
        problem: &Problem,
        store: &MemoryStore,
    ) -> Result<ForestOutcome, ForestRunError> {
        let usage_before = self.ledger.by_tag();
        let mut trace = ForestTrace {
            problem_id: problem.id.clone(),
            mode: match self.cfg.aggregation_mode {
                AggregationMode::Stepwise => "stepwise".to_string(),
                AggregationMode::Final => "final".to_string(),
            },
            ..ForestTrace::default()
        };
        let result = self.run_forest_inner(problem, store, &mut trace);
        trace.usage = usage_delta(&self.ledger.by_tag(), &usage_before);
        match result {
            Ok(answer) => {
                trace.answer = Some(answer.clone());
                Ok(ForestOutcome { answer, trace })
            }
            Err(error) => Err(ForestRunError {
                error,
                partial: Box::new(trace),
            }),
        }
    }

    fn run_forest_inner(
        &self,
        problem: &Problem,
        store: &MemoryStore,
        trace: &mut ForestTrace,
    ) -> Result<String, ForestError> {
        if let Some(specs) = &self.cfg.collaboration {
            if specs.len() != self.cfg.branches {
                return Err(ForestError::CollaborationSize {
                    expected: self.cfg.branches,
                    got: specs.len(),
                });
            }
        }

        let query = self.provider.embed(&problem.statement)?;
        let hits = store.retrieve_top_k_filtered(
            &query,
            self.cfg.retrieval_k,
            self.cfg.category_filter.as_deref(),
        )?;
        if hits.is_empty() {
            return Err(ForestError::EmptyStore);
        }
        let retrieved: Vec<&crate::model::MemoryEntry> = hits.iter().map(|(e, _)| *e).collect();

        let engine =
            GuidelineEngine::new(self.provider, self.prompts, self.options.clone(), self.ledger);
        let guidelines = match self.cfg.guideline_mode {
            GuidelineMode::Rewrite => {
                let anchor = engine.induce_guideline(problem, &retrieved)?;
                engine.rewrite_guidelines(&anchor, self.cfg.branches)?
            }
            GuidelineMode::InducePerBranch => {
                engine.induce_per_branch(problem, &retrieved, self.cfg.branches)?
            }
        };
        trace.guidelines = guidelines.clone();

        let mut branches: Vec<BranchState> = guidelines
            .iter()
            .enumerate()
            .map(|(i, g)| BranchState::new(i + 1, g.clone()))
            .collect();
        // Branch steps are indexed by the anchor guideline's step count; in
        // per-branch induction mode guidelines may differ in length and the
        // shortest bounds the walk.
        let total_steps = branches
            .iter()
            .map(|b| b.guideline.len())
            .min()
            .unwrap_or(0);

        let accepted = match self.cfg.aggregation_mode {
            AggregationMode::Stepwise => {
                self.run_stepwise(problem, &mut branches, total_steps, trace)?
            }
            AggregationMode::Final => {
                self.run_final(problem, &mut branches, total_steps, trace)?
            }
        };

        let (answer, raw) = self.conclude(problem, &accepted)?;
        trace.conclusion = raw;
        Ok(answer)
    }

    fn run_stepwise(
        &self,
        problem: &Problem,
        branches: &mut [BranchState],
        total_steps: usize,
        trace: &mut ForestTrace,
    ) -> Result<Vec<ReasoningStep>, ForestError> {
        let mut accepted: Vec<ReasoningStep> = Vec::with_capacity(total_steps);
        for t in 1..=total_steps {
            for branch in branches.iter_mut() {
                let model_id = self.branch_model(branch.branch_index);
                let guideline_step = branch.guideline.steps[t - 1].clone();
                let proposed =
                    self.propose_step(problem, &accepted, &guideline_step, t, &model_id)?;
                let refined = self.refine_step(problem, &guideline_step, &proposed, &model_id)?;
                branch.current_candidate = Some(proposed);
                branch.refined_candidate = if self.cfg.refinement_enabled {
                    Some(refined)
                } else {
                    None
                };
            }
            let candidates: Vec<ReasoningStep> = branches
                .iter()
                .map(|b| b.effective_candidate().expect("candidate set above").clone())
                .collect();
            let (chosen, mut step, verdict) = self.aggregate(problem, &candidates)?;
            step.index = t;
            trace.steps.push(StepTrace {
                index: t,
                proposed: branches
                    .iter()
                    .map(|b| b.current_candidate.clone().expect("set above"))
                    .collect(),
                refined: candidates.clone(),
                verdict,
                chosen,
                accepted: step.clone(),
            });
            accepted.push(step);
        }
        Ok(accepted)
    }

    /// Final-aggregation baseline: branches run all steps independently on
    /// their own prefixes; one judge call picks the winning branch at the
    /// end, and its path becomes the accepted trajectory.
    fn run_final(
        &self,
        problem: &Problem,
        branches: &mut [BranchState],
        total_steps: usize,
        trace: &mut ForestTrace,
    ) -> Result<Vec<ReasoningStep>, ForestError> {
        let mut paths: Vec<Vec<ReasoningStep>> = vec![Vec::new(); branches.len()];
        for (i, branch) in branches.iter_mut().enumerate() {
            let model_id = self.branch_model(branch.branch_index);
            for t in 1..=total_steps {
                let guideline_step = branch.guideline.steps[t - 1].clone();
                let proposed =
                    self.propose_step(problem, &paths[i], &guideline_step, t, &model_id)?;
                let refined = self.refine_step(problem, &guideline_step, &proposed, &model_id)?;
                branch.current_candidate = Some(proposed);
                let effective = if self.cfg.refinement_enabled {
                    branch.refined_candidate = Some(refined.clone());
                    refined
                } else {
                    branch.refined_candidate = None;
                    branch.current_candidate.clone().unwrap()
                };
                paths[i].push(effective);
            }
        }
        let finals: Vec<ReasoningStep> = paths
            .iter()
            .map(|p| p.last().expect("guideline has at least one step").clone())
            .collect();
        let (chosen, _, verdict) = self.aggregate(problem, &finals)?;
        trace.final_verdict = Some(verdict);
        let winner = &paths[chosen - 1];
        for (t, step) in winner.iter().enumerate() {
            trace.steps.push(StepTrace {
                index: t + 1,
                proposed: paths.iter().map(|p| p[t].clone()).collect(),
                refined: paths.iter().map(|p| p[t].clone()).collect(),
                verdict: String::new(),
                chosen,
                accepted: step.clone(),
            });
        }
        Ok(winner.clone())
    }

    /// Single-path mode: retrieve, induce one guideline, and prepend it to a
    /// base method's prompt. An empty store falls back to the plain method.
    pub fn guideline_injection(
        &self,
        problem: &Problem,
        store: &MemoryStore,
        base: BaseMethod,
    ) -> Result<String, ForestError> {
        let guideline = match self.retrieve_and_induce(problem, store)? {
            Some(g) => Some(g),
            None => {
                log::warn!("memory store is empty; running plain {base:?} without a guideline");
                None
            }
        };
        let block = guideline
            .as_ref()
            .map(|g| format!("Guideline:\n{}\n", g.render_steps()))
            .unwrap_or_default();

        match base {
            BaseMethod::Cot | BaseMethod::React => {
                let template = if base == BaseMethod::Cot {
                    TemplateId::Cot
                } else {
                    TemplateId::React
                };
                let tag = if base == BaseMethod::Cot {
                    "inject_cot"
                } else {
                    "inject_react"
                };
                let prompt = format!(
                    "{block}{}",
                    self.prompts.render(
                        template,
                        &[(placeholder::QUESTION, problem.statement.as_str())]
                    )
                );
                let reply = self.chat(tag, &prompt)?;
                extract_answer(&reply).ok_or(ForestError::AnswerExtractionFailed)
            }
            BaseMethod::Tot => {
                let search = TotSearch {
                    provider: self.provider,
                    prompts: self.prompts,
                    options: &self.options,
                    ledger: self.ledger,
                    guideline: guideline.as_ref(),
                };
                // Inference-time search has no label: accept the first
                // complete candidate the judge-ordered walk reaches.
                let run = search.run(
                    problem,
                    TotParams {
                        breadth: 3,
                        depth: 3,
                    },
                    &mut |_| Ok(true),
                )?;
                run.candidate
                    .map(|c| c.answer)
                    .ok_or(ForestError::AnswerExtractionFailed)
            }
        }
    }

    fn retrieve_and_induce(
        &self,
        problem: &Problem,
        store: &MemoryStore,
    ) -> Result<Option<Guideline>, ForestError> {
        if store.is_empty() {
            return Ok(None);
        }
        let query = self.provider.embed(&problem.statement)?;
        let hits = store.retrieve_top_k_filtered(
            &query,
            self.cfg.retrieval_k,
            self.cfg.category_filter.as_deref(),
        )?;
        if hits.is_empty() {
            return Ok(None);
        }
        let retrieved: Vec<&crate::model::MemoryEntry> = hits.iter().map(|(e, _)| *e).collect();
        let engine =
            GuidelineEngine::new(self.provider, self.prompts, self.options.clone(), self.ledger);
        Ok(Some(engine.induce_guideline(problem, &retrieved)?))
    }
}

/// Parse "answer N is the best"; `None` when missing or out of range.
fn parse_verdict(reply: &str, candidates: usize) -> Option<usize> {
    let n: usize = VERDICT_RE.captures(reply)?.get(1)?.as_str().parse().ok()?;
    if (1..=candidates).contains(&n) {
        Some(n)
    } else {
        None
    }
}

/// Parse "candidate N: score" lines into a dense per-candidate score vector
/// normalized to [0, 1]; absent candidates score 0.
fn parse_candidate_scores(reply: &str, candidates: usize) -> Vec<f64> {
    let mut scores = vec![0.0; candidates];
    for caps in CANDIDATE_SCORE_RE.captures_iter(reply) {
        if let (Ok(n), Ok(v)) = (caps[1].parse::<usize>(), caps[2].parse::<f64>()) {
            if (1..=candidates).contains(&n) {
                scores[n - 1] = (v / 10.0).clamp(0.0, 1.0);
            }
        }
    }
    scores
}

fn usage_delta(
    after: &BTreeMap<String, TagTotals>,
    before: &BTreeMap<String, TagTotals>,
) -> BTreeMap<String, TagTotals> {
    let mut out = BTreeMap::new();
    for (tag, a) in after {
        let b = before.get(tag).copied().unwrap_or_default();
        let delta = TagTotals {
            calls: a.calls - b.calls,
            prompt_tokens: a.prompt_tokens - b.prompt_tokens,
            completion_tokens: a.completion_tokens - b.completion_tokens,
        };
        if delta.calls > 0 {
            out.insert(tag.clone(), delta);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::EntryDraft;
    use crate::model::Trajectory;
    use crate::provider::{MockProvider, ScriptedReply};

    fn problem() -> Problem {
        Problem::math("q1", "Convert the point (0,3) to polar coordinates.", "(3, π/2)").unwrap()
    }

    fn seeded_store(mock: &MockProvider) -> MemoryStore {
        let mut store = MemoryStore::in_memory(mock.embedding_dimension());
        for (i, text) in ["convert cylindrical", "convert polar", "convert spherical"]
            .iter()
            .enumerate()
        {
            let p = Problem::math(format!("m{i}"), *text, "x").unwrap();
            let t = Trajectory::new(
                format!("m{i}"),
                vec![ReasoningStep::new(1, "apply the formulas", Origin::Cot).unwrap()],
                "x",
            )
            .unwrap()
            .mark_verified();
            let embedding = mock.embed(text).unwrap();
            store
                .append(EntryDraft::new(p, t, embedding, Origin::Cot))
                .unwrap();
        }
        store
    }

    fn executor<'a>(
        mock: &'a MockProvider,
        prompts: &'a PromptRegistry,
        ledger: &'a UsageLedger,
        cfg: ExecConfig,
    ) -> ForestExecutor<'a> {
        ForestExecutor::new(mock, prompts, ChatOptions::new("mock-model"), cfg, ledger)
    }

    /// Replies for a clean run: induce, M-1 rewrites, then per-step chatter.
    fn guideline_replies(m: usize, t: usize) -> Vec<ScriptedReply> {
        let steps = |label: &str| -> String {
            (1..=t)
                .map(|i| format!("<step {i}>: {label} part {i}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let mut replies = vec![ScriptedReply::new(format!(
            "Problem: the core problem\n{}",
            steps("anchor")
        ))];
        for v in 1..m {
            replies.push(ScriptedReply::new(format!(
                "New Guideline:\n{}",
                steps(&format!("variant {v}"))
            )));
        }
        replies
    }

    #[test]
    fn weighted_vote_plain_argmax() {
        assert_eq!(weighted_vote(&[vec![0.2, 0.9, 0.5]], &[1.0]).unwrap(), 2);
    }

    #[test]
    fn weighted_vote_two_models_hand_sum() {
        // Sums: [1*0.6 + 1*0.3, 1*0.4 + 1*0.7] = [0.9, 1.1] -> candidate 2.
        let scores = vec![vec![0.6, 0.4], vec![0.3, 0.7]];
        assert_eq!(weighted_vote(&scores, &[1.0, 1.0]).unwrap(), 2);
    }

    #[test]
    fn weighted_vote_tie_breaks_low() {
        let scores = vec![vec![0.5, 0.5]];
        assert_eq!(weighted_vote(&scores, &[2.0]).unwrap(), 1);
    }

    #[test]
    fn weighted_vote_errors() {
        assert!(matches!(
            weighted_vote(&[vec![0.1], vec![0.1, 0.2]], &[1.0, 1.0]),
            Err(ForestError::ShapeMismatch(_))
        ));
        assert!(matches!(
            weighted_vote(&[vec![0.1, 0.2]], &[0.0]),
            Err(ForestError::NonPositiveWeight(_))
        ));
        assert!(matches!(
            weighted_vote(&[vec![0.1]], &[1.0, 2.0]),
            Err(ForestError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("answer 2 is the best", 3), Some(2));
        assert_eq!(parse_verdict("Answer 3 is the best!", 3), Some(3));
        assert_eq!(parse_verdict("answer 7 is the best", 3), None);
        assert_eq!(parse_verdict("I think B", 3), None);
    }

    #[test]
    fn candidate_score_parsing() {
        let scores = parse_candidate_scores("candidate 1: 8\ncandidate 2: 3.5", 3);
        assert_eq!(scores, vec![0.8, 0.35, 0.0]);
    }

    #[test]
    fn aggregate_follows_judge_verdict() {
        let mock = MockProvider::scripted(vec!["answer 2 is the best"]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let candidates = vec![
            ReasoningStep::new(1, "first", Origin::BranchRefined).unwrap(),
            ReasoningStep::new(1, "second", Origin::BranchRefined).unwrap(),
        ];
        let (chosen, accepted, _) = exec.aggregate_step(&problem(), &candidates).unwrap();
        assert_eq!(chosen, 2);
        assert_eq!(accepted.text, "second");
        assert_eq!(accepted.origin, Origin::Aggregated);
    }

    #[test]
    fn aggregate_single_candidate_skips_judge() {
        let mock = MockProvider::scripted(Vec::<String>::new());
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let candidates = vec![ReasoningStep::new(1, "only", Origin::BranchRefined).unwrap()];
        let (chosen, _, _) = exec.aggregate_step(&problem(), &candidates).unwrap();
        assert_eq!(chosen, 1);
        assert_eq!(mock.calls_served(), 0);
    }

    #[test]
    fn aggregate_unparseable_verdict_falls_back() {
        let mock = MockProvider::scripted(vec!["I think B"]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let candidates = vec![
            ReasoningStep::new(1, "first", Origin::BranchRefined).unwrap(),
            ReasoningStep::new(1, "second", Origin::BranchRefined).unwrap(),
        ];
        let (chosen, accepted, verdict) = exec.aggregate_step(&problem(), &candidates).unwrap();
        assert_eq!(chosen, 1);
        assert_eq!(accepted.text, "first");
        assert_eq!(verdict, "I think B");
    }

    #[test]
    fn refine_disabled_passes_through_without_calls() {
        let mock = MockProvider::scripted(Vec::<String>::new());
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let cfg = ExecConfig {
            refinement_enabled: false,
            ..ExecConfig::default()
        };
        let exec = executor(&mock, &prompts, &ledger, cfg);
        let candidate = ReasoningStep::new(1, "r = 3", Origin::BranchProposed).unwrap();
        let refined = exec
            .refine_step(&problem(), "compute r", &candidate, "mock-model")
            .unwrap();
        assert_eq!(refined, candidate);
        assert_eq!(mock.calls_served(), 0);
    }

    #[test]
    fn refine_case_confirmation() {
        let refined_text = "The given result correctly identifies the rectangular coordinates as (x, y) = (0, 3).";
        let mock = MockProvider::scripted(vec![refined_text]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let candidate = ReasoningStep::new(
            1,
            "The current coordinate system is rectangular, point (0, 3).",
            Origin::BranchProposed,
        )
        .unwrap();
        let refined = exec
            .refine_step(&problem(), "Identify the coordinate system.", &candidate, "mock-model")
            .unwrap();
        assert_eq!(refined.text, refined_text);
        assert_eq!(refined.origin, Origin::BranchRefined);
    }

    #[test]
    fn propose_renders_prefix_in_order() {
        let mock = MockProvider::scripted(vec!["next step"]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let prefix = vec![
            ReasoningStep::new(1, "identified the system", Origin::Aggregated).unwrap(),
            ReasoningStep::new(2, "computed r = 3", Origin::Aggregated).unwrap(),
        ];
        exec.propose_step(&problem(), &prefix, "find theta", 3, "mock-model")
            .unwrap();
        let captured = mock.captured_requests();
        let prompt = &captured[0].messages[0].content;
        assert!(prompt.contains("Step 1: identified the system\nStep 2: computed r = 3"));
        assert!(prompt.contains("Execute the guideline: find theta"));
    }

    #[test]
    fn conclude_extracts_final_answer() {
        let mock = MockProvider::scripted(vec![
            "<The final answer is: The polar coordinates of the point (0,3) are (3, π/2)>",
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let steps = vec![ReasoningStep::new(1, "r=3, θ=π/2", Origin::Aggregated).unwrap()];
        let (answer, _) = exec.conclude(&problem(), &steps).unwrap();
        assert_eq!(answer, "The polar coordinates of the point (0,3) are (3, π/2)");
    }

    #[test]
    fn conclude_without_marker_fails() {
        let mock = MockProvider::scripted(vec!["no marker"]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let steps = vec![ReasoningStep::new(1, "s", Origin::Aggregated).unwrap()];
        assert!(matches!(
            exec.conclude(&problem(), &steps),
            Err(ForestError::AnswerExtractionFailed)
        ));
    }

    #[test]
    fn degenerate_single_branch_run() {
        // M=1, refinement off: induce, T=2 proposals, no judges, conclusion.
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(guideline_replies(1, 2));
        mock.push_replies(vec![
            "r = sqrt(0^2+3^2) = 3",
            "theta = pi/2",
            "The final answer is: (3, π/2)",
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let cfg = ExecConfig {
            branches: 1,
            refinement_enabled: false,
            ..ExecConfig::default()
        };
        let exec = executor(&mock, &prompts, &ledger, cfg);
        let store = seeded_store(&mock);
        let outcome = exec.run_forest(&problem(), &store).unwrap();
        assert_eq!(outcome.answer, "(3, π/2)");
        assert_eq!(outcome.trace.steps.len(), 2);
        assert_eq!(mock.calls_served(), 1 + 2 + 1);
        assert!(outcome.trace.usage.contains_key("propose"));
    }

    #[test]
    fn full_stepwise_call_pattern_m3_t2() {
        // Call order per step: (propose, refine) per branch, then the judge.
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(guideline_replies(3, 2));
        for t in 1..=2 {
            for b in 1..=3 {
                mock.push_replies(vec![
                    format!("proposal b{b} t{t}"),
                    format!("refined b{b} t{t}"),
                ]);
            }
            mock.push_replies(vec![format!("answer 2 is the best (step {t})")]);
        }
        mock.push_replies(vec!["The final answer is: (3, π/2)".to_string()]);

        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let store = seeded_store(&mock);
        let outcome = exec.run_forest(&problem(), &store).unwrap();

        // 1 induce + 2 rewrites + 6 proposals + 6 refines + 2 judges + 1 conclusion.
        assert_eq!(mock.calls_served(), 18);
        assert_eq!(outcome.trace.steps.len(), 2);
        for step in &outcome.trace.steps {
            assert_eq!(step.proposed.len(), 3);
            assert_eq!(step.refined.len(), 3);
            assert_eq!(step.chosen, 2);
        }
        assert_eq!(outcome.trace.steps[0].accepted.text, "refined b2 t1");
        // Accepted prefix embedded identically in every step-2 proposal.
        let captured = mock.captured_requests();
        let step2_proposals: Vec<&str> = captured
            .iter()
            .map(|r| r.messages[0].content.as_str())
            .filter(|p| p.contains("Execute the guideline") && p.contains("part 2"))
            .collect();
        assert_eq!(step2_proposals.len(), 3);
        for p in &step2_proposals {
            assert!(p.contains("Previous analysis: Step 1: refined b2 t1"));
        }
    }

    #[test]
    fn final_mode_judges_once() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(guideline_replies(3, 2));
        for b in 1..=3 {
            for t in 1..=2 {
                mock.push_replies(vec![format!("proposal b{b} t{t}")]);
            }
        }
        mock.push_replies(vec![
            "answer 3 is the best".to_string(),
            "The final answer is: (3, π/2)".to_string(),
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let cfg = ExecConfig {
            refinement_enabled: false,
            aggregation_mode: AggregationMode::Final,
            ..ExecConfig::default()
        };
        let exec = executor(&mock, &prompts, &ledger, cfg);
        let store = seeded_store(&mock);
        let outcome = exec.run_forest(&problem(), &store).unwrap();
        // 1 induce + 2 rewrites + 6 proposals + 1 judge + 1 conclusion.
        assert_eq!(mock.calls_served(), 11);
        assert_eq!(outcome.trace.final_verdict.as_deref(), Some("answer 3 is the best"));
        // Winner is branch 3's path.
        assert_eq!(outcome.trace.steps[0].accepted.text, "proposal b3 t1");
        assert_eq!(outcome.trace.steps[1].accepted.text, "proposal b3 t2");
        // No per-step judge calls happened: only one aggregate tag record.
        assert_eq!(ledger.by_tag()["aggregate"].calls, 1);
    }

    #[test]
    fn collaboration_routes_branches_to_models() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(guideline_replies(2, 1));
        mock.push_replies(vec![
            "proposal from model-a",
            "proposal from model-b",
            "candidate 1: 4\ncandidate 2: 9", // model-a scores
            "candidate 1: 6\ncandidate 2: 7", // model-b scores
            "The final answer is: 42",
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let cfg = ExecConfig {
            branches: 2,
            refinement_enabled: false,
            collaboration: Some(vec![
                ModelSpec::new("model-a"),
                ModelSpec::new("model-b"),
            ]),
            ..ExecConfig::default()
        };
        let exec = executor(&mock, &prompts, &ledger, cfg);
        let store = seeded_store(&mock);
        let outcome = exec.run_forest(&problem(), &store).unwrap();
        // Weighted sums: [1.0, 1.6] -> candidate 2.
        assert_eq!(outcome.trace.steps[0].chosen, 2);
        assert_eq!(outcome.trace.steps[0].accepted.text, "proposal from model-b");

        let captured = mock.captured_requests();
        let proposals: Vec<&crate::provider::ChatRequest> = captured
            .iter()
            .filter(|r| r.messages[0].content.contains("Execute the guideline"))
            .collect();
        assert_eq!(proposals[0].model_id, "model-a");
        assert_eq!(proposals[1].model_id, "model-b");
        // Scoring calls also route per model.
        let votes: Vec<&crate::provider::ChatRequest> = captured
            .iter()
            .filter(|r| r.messages[0].content.contains("score each candidate"))
            .collect();
        assert_eq!(votes.len(), 2);
        assert_eq!(votes[0].model_id, "model-a");
        assert_eq!(votes[1].model_id, "model-b");
    }

    #[test]
    fn collaboration_size_mismatch_rejected() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let cfg = ExecConfig {
            branches: 3,
            collaboration: Some(vec![ModelSpec::new("only-one")]),
            ..ExecConfig::default()
        };
        let exec = executor(&mock, &prompts, &ledger, cfg);
        let store = seeded_store(&mock);
        let err = exec.run_forest(&problem(), &store).unwrap_err();
        assert!(matches!(err.error, ForestError::CollaborationSize { expected: 3, got: 1 }));
    }

    #[test]
    fn empty_store_is_an_error_with_partial_trace() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let store = MemoryStore::in_memory(16);
        let err = exec.run_forest(&problem(), &store).unwrap_err();
        assert!(matches!(err.error, ForestError::EmptyStore));
        assert!(err.partial.steps.is_empty());
    }

    #[test]
    fn injection_cot_prepends_guideline_before_question() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(vec![
            "Problem: core\n<step 1>: apply formulas".to_string(),
            "The radius is 3. <answer>(3, π/2)</answer>".to_string(),
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let store = seeded_store(&mock);
        let answer = exec
            .guideline_injection(&problem(), &store, BaseMethod::Cot)
            .unwrap();
        assert_eq!(answer, "(3, π/2)");
        let captured = mock.captured_requests();
        let prompt = &captured[1].messages[0].content;
        let guideline_pos = prompt.find("Guideline:").unwrap();
        let question_pos = prompt.find("Question: Convert the point").unwrap();
        assert!(guideline_pos < question_pos);
    }

    #[test]
    fn injection_empty_store_falls_back_to_plain_method() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(vec!["<answer>7</answer>".to_string()]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let store = MemoryStore::in_memory(16);
        let answer = exec
            .guideline_injection(&problem(), &store, BaseMethod::Cot)
            .unwrap();
        assert_eq!(answer, "7");
        let captured = mock.captured_requests();
        assert!(!captured[0].messages[0].content.contains("Guideline:"));
    }

    #[test]
    fn injection_tot_carries_guideline_in_every_expansion() {
        let mock = MockProvider::new(Vec::new(), 16, 0);
        mock.push_replies(vec![
            "Problem: core\n<step 1>: think in steps".to_string(),
            // Root expansion: three proposals, none complete...
            "partial a".to_string(),
            "partial b".to_string(),
            "partial c".to_string(),
            // ...scored...
            "<score 9>".to_string(),
            "<score 2>".to_string(),
            "<score 1>".to_string(),
            // ...best child expands (full beam first) and completes.
            "done <answer>42</answer>".to_string(),
            "unused sibling 1".to_string(),
            "unused sibling 2".to_string(),
        ]);
        let prompts = PromptRegistry::builtin();
        let ledger = UsageLedger::new();
        let exec = executor(&mock, &prompts, &ledger, ExecConfig::default());
        let store = seeded_store(&mock);
        let answer = exec
            .guideline_injection(&problem(), &store, BaseMethod::Tot)
            .unwrap();
        assert_eq!(answer, "42");
        let captured = mock.captured_requests();
        for req in captured.iter().skip(1) {
            let content = &req.messages[0].content;
            if content.contains("propose the single next reasoning step") {
                assert!(
                    content.starts_with("Guideline:\n<step 1>: think in steps"),
                    "expansion prompt missing guideline: {content}"
                );
            }
        }
    }
}
