//! Training-phase pipeline: turn (problem, label) pairs into verified gold
//! trajectories through staged escalation, appending successes to memory.
//!
//! Stage order is fixed: plain chain-of-thought, then label-guided
//! regeneration, then tree exploration, then memory-guided generation.
//! The first verified trajectory wins; a problem that survives all four
//! stages is recorded as failed and leaves the store untouched.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{GuidelineEngine, GuidelineError};
use crate::memory::{EntryDraft, MemoryError, MemoryStore};
use crate::model::{Origin, Problem, ReasoningStep, Trajectory};
use crate::prompts::{placeholder, PromptRegistry, TemplateId};
use crate::provider::{ChatOptions, Provider, ProviderError, TagTotals, UsageLedger};
use crate::tot::{TotParams, TotSearch};
use crate::verifier::{extract_answer, verify, VerifierError};

#[derive(Debug, Error)]
pub enum GoldError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("model reply was empty")]
    EmptyReply,
}

/// Knobs for the staged builder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Best-of-n rounds for label-guided regeneration.
    pub label_guided_rounds: usize,
    pub tot_breadth: usize,
    pub tot_depth: usize,
    pub memory_fallback_enabled: bool,
    /// Top-k for the memory-guided stage.
    pub retrieval_k: usize,
    /// Replace programmatic math checking with a judge call (experimental).
    pub llm_verifier: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            label_guided_rounds: 3,
            tot_breadth: 3,
            tot_depth: 3,
            memory_fallback_enabled: true,
            retrieval_k: 3,
            llm_verifier: false,
        }
    }
}

/// Which stage settled a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStage {
    Cot,
    LabelGuided,
    Tot,
    MemoryGuided,
    Failed,
}

impl BuildStage {
    pub fn origin(self) -> Option<Origin> {
        match self {
            BuildStage::Cot => Some(Origin::Cot),
            BuildStage::LabelGuided => Some(Origin::LabelGuided),
            BuildStage::Tot => Some(Origin::Tot),
            BuildStage::MemoryGuided => Some(Origin::MemoryGuided),
            BuildStage::Failed => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuildStage::Cot => "cot",
            BuildStage::LabelGuided => "label_guided",
            BuildStage::Tot => "tot",
            BuildStage::MemoryGuided => "memory_guided",
            BuildStage::Failed => "failed",
        }
    }
}

/// Attempt counts per stage for one problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAttempts {
    pub cot: u32,
    pub label_guided: u32,
    /// Proposal calls spent inside tree exploration.
    pub tot: u32,
    pub memory_guided: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub problem_id: String,
    pub succeeded: bool,
    pub stage: BuildStage,
    pub attempts: StageAttempts,
    pub usage: TagTotals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Result of a single chain-of-thought attempt; `answer` is `None` when the
/// reply carried no answer marker (the attempt then counts as incorrect).
#[derive(Debug, Clone)]
pub struct CotAttempt {
    pub trajectory: Trajectory,
    pub answer: Option<String>,
}

static STEP_TAG_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?im)^\s*(?:\*\*)?<step(?:\s*\d+)?>(?:\*\*)?\s*:?\s*").unwrap());
static STEP_WORD_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?im)^\s*(?:\*\*)?step\s+\d+(?:\*\*)?\s*[:.)]?\s*").unwrap());
static NUMBERED_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?m)^\s*\d+[.)]\s+").unwrap());

fn split_by(re: &Regex, text: &str) -> Option<Vec<String>> {
    let starts: Vec<(usize, usize)> = re.find_iter(text).map(|m| (m.start(), m.end())).collect();
    if starts.is_empty() {
        return None;
    }
    let mut segments = Vec::with_capacity(starts.len());
    for (i, (_, content_start)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map(|(s, _)| *s).unwrap_or(text.len());
        let segment = text[*content_start..end].trim();
        if !segment.is_empty() {
            segments.push(segment.to_string());
        }
    }
    if segments.is_empty() {
        None
    } else {
        Some(segments)
    }
}

/// Split a free-form reasoning reply into step texts. Tries explicit step
/// markers, then numbered lines, then paragraphs, and finally treats the
/// whole reply as a single step.
pub fn split_steps(reply: &str) -> Vec<String> {
    if let Some(steps) = split_by(&STEP_TAG_RE, reply) {
        return steps;
    }
    if let Some(steps) = split_by(&STEP_WORD_RE, reply) {
        return steps;
    }
    if let Some(steps) = split_by(&NUMBERED_RE, reply) {
        return steps;
    }
    let paragraphs: Vec<String> = reply
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect();
    if paragraphs.len() >= 2 {
        return paragraphs;
    }
    let whole = reply.trim();
    if whole.is_empty() {
        Vec::new()
    } else {
        vec![whole.to_string()]
    }
}

/// Parse a model reply into a trajectory with the given provenance.
pub fn parse_reply_into_trajectory(
    problem_id: &str,
    reply: &str,
    origin: Origin,
) -> Result<(Trajectory, Option<String>), GoldError> {
    let answer = extract_answer(reply);
    let steps: Vec<ReasoningStep> = split_steps(reply)
        .into_iter()
        .enumerate()
        .map(|(i, text)| ReasoningStep::new(i + 1, text, origin).expect("segments are non-empty"))
        .collect();
    if steps.is_empty() {
        return Err(GoldError::EmptyReply);
    }
    let trajectory = Trajectory::new(
        problem_id,
        steps,
        answer.clone().unwrap_or_default(),
    )
    .expect("steps are contiguous and non-empty");
    Ok((trajectory, answer))
}

pub struct GoldBuilder<'a> {
    provider: &'a dyn Provider,
    prompts: &'a PromptRegistry,
    options: ChatOptions,
    cfg: BuildConfig,
    ledger: &'a UsageLedger,
    dataset_tag: Option<String>,
}

impl<'a> GoldBuilder<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        prompts: &'a PromptRegistry,
        options: ChatOptions,
        cfg: BuildConfig,
        ledger: &'a UsageLedger,
    ) -> Self {
        Self {
            provider,
            prompts,
            options,
            cfg,
            ledger,
            dataset_tag: None,
        }
    }

    /// Tag appended entries with a dataset/category label.
    pub fn with_dataset_tag(mut self, tag: Option<String>) -> Self {
        self.dataset_tag = tag;
        self
    }

    fn chat(&self, tag: &str, prompt: &str) -> Result<String, ProviderError> {
        let resp = self.provider.chat(&self.options.request(prompt))?;
        self.ledger.record(tag, &resp.usage);
        Ok(resp.content)
    }

    /// Answer acceptance: programmatic by default, judge-based when the
    /// experimental flag is on (math only; code always runs its tests).
    fn check_answer(&self, problem: &Problem, answer: &str) -> Result<bool, GoldError> {
        if self.cfg.llm_verifier && problem.task_kind == crate::model::TaskKind::Math {
            let label = problem.label.as_deref().ok_or(VerifierError::MissingLabel)?;
            let prompt = self.prompts.render(
                TemplateId::LlmVerify,
                &[
                    (placeholder::QUESTION, problem.statement.as_str()),
                    (placeholder::GROUND_TRUTH, label),
                    (placeholder::RESULT, answer),
                ],
            );
            let reply = self.chat("verify", &prompt)?;
            return Ok(reply.trim().to_lowercase().starts_with("yes"));
        }
        Ok(verify(problem, answer)?)
    }

    /// One chain-of-thought attempt; the trajectory is kept even when no
    /// answer marker was found.
    pub fn cot_attempt(&self, problem: &Problem) -> Result<CotAttempt, GoldError> {
        let prompt = self.prompts.render(
            TemplateId::Cot,
            &[(placeholder::QUESTION, problem.statement.as_str())],
        );
        let reply = self.chat("cot", &prompt)?;
        let (trajectory, answer) = parse_reply_into_trajectory(&problem.id, &reply, Origin::Cot)?;
        Ok(CotAttempt { trajectory, answer })
    }

    /// Up to `label_guided_rounds` independent regenerations conditioned on
    /// the ground-truth answer; returns the first verified trajectory and
    /// the number of rounds spent.
    pub fn label_guided_regen(
        &self,
        problem: &Problem,
    ) -> Result<(Option<Trajectory>, u32), GoldError> {
        let label = problem.label.as_deref().ok_or(VerifierError::MissingLabel)?;
        let prompt = self.prompts.render(
            TemplateId::Rectify,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::GROUND_TRUTH, label),
            ],
        );
        for round in 1..=self.cfg.label_guided_rounds as u32 {
            let reply = self.chat("label_guided", &prompt)?;
            let (trajectory, answer) =
                match parse_reply_into_trajectory(&problem.id, &reply, Origin::LabelGuided) {
                    Ok(parsed) => parsed,
                    Err(GoldError::EmptyReply) => continue,
                    Err(e) => return Err(e),
                };
            if let Some(answer) = answer {
                if self.check_answer(problem, &answer)? {
                    return Ok((Some(trajectory.mark_verified()), round));
                }
            }
        }
        Ok((None, self.cfg.label_guided_rounds as u32))
    }

    /// Bounded best-first exploration; returns the first label-verified
    /// complete trajectory plus the proposal count.
    pub fn tot_explore(&self, problem: &Problem) -> Result<(Option<Trajectory>, u32), GoldError> {
        let search = TotSearch {
            provider: self.provider,
            prompts: self.prompts,
            options: &self.options,
            ledger: self.ledger,
            guideline: None,
        };
        let params = TotParams {
            breadth: self.cfg.tot_breadth,
            depth: self.cfg.tot_depth,
        };
        let mut check_err: Option<GoldError> = None;
        let mut accept = |answer: &str| -> Result<bool, ProviderError> {
            match self.check_answer(problem, answer) {
                Ok(ok) => Ok(ok),
                Err(GoldError::Provider(e)) => Err(e),
                Err(e) => {
                    check_err = Some(e);
                    Ok(false)
                }
            }
        };
        let run = search.run(problem, params, &mut accept)?;
        if let Some(e) = check_err {
            return Err(e);
        }
        Ok((
            run.candidate.map(|c| c.trajectory.mark_verified()),
            run.proposals,
        ))
    }

    /// Retrieve similar solved problems, induce a provisional guideline, and
    /// generate one guided trajectory. `None` when the guided answer fails
    /// verification; the stage is skipped upstream when the store is empty.
    pub fn memory_guided_attempt(
        &self,
        problem: &Problem,
        store: &MemoryStore,
    ) -> Result<Option<Trajectory>, GoldError> {
        let query = self.provider.embed(&problem.statement)?;
        let hits = store.retrieve_top_k(&query, self.cfg.retrieval_k)?;
        let retrieved: Vec<&crate::model::MemoryEntry> = hits.iter().map(|(e, _)| *e).collect();
        let engine =
            GuidelineEngine::new(self.provider, self.prompts, self.options.clone(), self.ledger);
        let guideline = engine.induce_guideline(problem, &retrieved)?;

        let base = self.prompts.render(
            TemplateId::Cot,
            &[(placeholder::QUESTION, problem.statement.as_str())],
        );
        let prompt = format!("Guideline:\n{}\n{}", guideline.render_steps(), base);
        let reply = self.chat("memory_guided", &prompt)?;
        let (trajectory, answer) =
            parse_reply_into_trajectory(&problem.id, &reply, Origin::MemoryGuided)?;
        if let Some(answer) = answer {
            if self.check_answer(problem, &answer)? {
                return Ok(Some(trajectory.mark_verified()));
            }
        }
        Ok(None)
    }

    /// Run the staged pipeline for one problem, appending the verified
    /// trajectory to the store on success. Errors never escape: they are
    /// folded into a failed outcome with a diagnostic.
    pub fn build_gold(&self, problem: &Problem, store: &mut MemoryStore) -> BuildOutcome {
        let usage_before = self.ledger.totals();
        let mut attempts = StageAttempts::default();
        let result = self.run_stages(problem, store, &mut attempts);
        let usage_after = self.ledger.totals();
        let usage = TagTotals {
            calls: usage_after.calls - usage_before.calls,
            prompt_tokens: usage_after.prompt_tokens - usage_before.prompt_tokens,
            completion_tokens: usage_after.completion_tokens - usage_before.completion_tokens,
        };
        match result {
            Ok(stage) => BuildOutcome {
                problem_id: problem.id.clone(),
                succeeded: stage != BuildStage::Failed,
                stage,
                attempts,
                usage,
                diagnostic: None,
            },
            Err(e) => BuildOutcome {
                problem_id: problem.id.clone(),
                succeeded: false,
                stage: BuildStage::Failed,
                attempts,
                usage,
                diagnostic: Some(e.to_string()),
            },
        }
    }

    fn run_stages(
        &self,
        problem: &Problem,
        store: &mut MemoryStore,
        attempts: &mut StageAttempts,
    ) -> Result<BuildStage, GoldError> {
        // Stage 1: plain chain-of-thought.
        attempts.cot = 1;
        let cot = self.cot_attempt(problem)?;
        if let Some(answer) = &cot.answer {
            if self.check_answer(problem, answer)? {
                self.store_trajectory(problem, cot.trajectory.mark_verified(), BuildStage::Cot, store)?;
                return Ok(BuildStage::Cot);
            }
        }

        // Stage 2: label-guided regeneration (needs a label).
        if problem.label.is_some() {
            let (found, rounds) = self.label_guided_regen(problem)?;
            attempts.label_guided = rounds;
            if let Some(trajectory) = found {
                self.store_trajectory(problem, trajectory, BuildStage::LabelGuided, store)?;
                return Ok(BuildStage::LabelGuided);
            }
        }

        // Stage 3: structured exploration.
        let (found, proposals) = self.tot_explore(problem)?;
        attempts.tot = proposals;
        if let Some(trajectory) = found {
            self.store_trajectory(problem, trajectory, BuildStage::Tot, store)?;
            return Ok(BuildStage::Tot);
        }

        // Stage 4: memory-guided generation, skipped on an empty store.
        if self.cfg.memory_fallback_enabled && !store.is_empty() {
            attempts.memory_guided = 1;
            if let Some(trajectory) = self.memory_guided_attempt(problem, store)? {
                self.store_trajectory(problem, trajectory, BuildStage::MemoryGuided, store)?;
                return Ok(BuildStage::MemoryGuided);
            }
        }

        Ok(BuildStage::Failed)
    }

    fn store_trajectory(
        &self,
        problem: &Problem,
        trajectory: Trajectory,
        stage: BuildStage,
        store: &mut MemoryStore,
    ) -> Result<(), GoldError> {
        let embedding = self.provider.embed(&problem.statement)?;
        let draft = EntryDraft::new(
            problem.clone(),
            trajectory,
            embedding,
            stage.origin().expect("success stages map to an origin"),
        )
        .with_tag(self.dataset_tag.clone());
        store.append(draft)?;
        Ok(())
    }
}
