//! Guideline induction, rewriting, and structured-step parsing.
//!
//! One guideline is induced from retrieved gold trajectories, then rewritten
//! into structurally parallel variants: every variant keeps the original's
//! step count so the branches stay aligned during stepwise execution.

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::model::{Guideline, MemoryEntry, Problem};
use crate::prompts::{placeholder, render_positive_samples, PromptRegistry, TemplateId};
use crate::provider::{ChatOptions, Provider, ProviderError, UsageLedger};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuidelineParseError {
    #[error("no step markers found")]
    NoSteps,
    #[error("step markers not contiguous: marker {position} is numbered {index}")]
    NonContiguous { position: usize, index: usize },
    #[error("step {index} has empty content")]
    EmptyStep { index: usize },
}

#[derive(Debug, Error)]
pub enum GuidelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("guideline reply unparseable after retry: {0}")]
    Parse(GuidelineParseError),
    #[error("guideline induction requires at least one retrieved example")]
    NoExamples,
}

static STEP_MARKER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)(?:\*\*)?<step\s*(\d+)>(?:\*\*)?\s*:?\s*").unwrap());
static PROBLEM_LINE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?im)^\s*(?:\*\*)?(?:core\s+)?problem(?:\*\*)?\s*:\s*(.+)$").unwrap());

/// Strip a single `[...]` wrapper, the output-format bracket convention.
fn strip_bracket_wrapper(s: &str) -> &str {
    let t = s.trim();
    if t.len() >= 2 && t.starts_with('[') && t.ends_with(']') {
        t[1..t.len() - 1].trim()
    } else {
        t
    }
}

/// Parse `<step N>` markers (case-insensitive, tolerant of bold markers and
/// a missing colon) into a guideline. Steps must be numbered 1..T
/// contiguously in order of appearance.
pub fn parse_guideline(text: &str) -> Result<Guideline, GuidelineParseError> {
    let markers: Vec<(usize, usize, usize)> = STEP_MARKER_RE
        .captures_iter(text)
        .map(|caps| {
            let m = caps.get(0).unwrap();
            let index: usize = caps[1].parse().unwrap_or(0);
            (m.start(), m.end(), index)
        })
        .collect();
    if markers.is_empty() {
        return Err(GuidelineParseError::NoSteps);
    }

    let mut steps = Vec::with_capacity(markers.len());
    for (pos, window) in markers.windows(2).enumerate() {
        let (_, content_start, index) = window[0];
        if index != pos + 1 {
            return Err(GuidelineParseError::NonContiguous {
                position: pos + 1,
                index,
            });
        }
        let content = strip_bracket_wrapper(&text[content_start..window[1].0]);
        if content.is_empty() {
            return Err(GuidelineParseError::EmptyStep { index });
        }
        steps.push(content.to_string());
    }
    let (_, last_start, last_index) = *markers.last().unwrap();
    if last_index != markers.len() {
        return Err(GuidelineParseError::NonContiguous {
            position: markers.len(),
            index: last_index,
        });
    }
    let content = strip_bracket_wrapper(&text[last_start..]);
    if content.is_empty() {
        return Err(GuidelineParseError::EmptyStep { index: last_index });
    }
    steps.push(content.to_string());

    // The core-problem line, when present, sits before the first marker.
    let head = &text[..markers[0].0];
    let core_problem = PROBLEM_LINE_RE
        .captures(head)
        .map(|caps| caps[1].trim().to_string())
        .unwrap_or_default();

    Ok(Guideline {
        core_problem,
        steps,
        source_entry_ids: Vec::new(),
    })
}

/// Induces and rewrites guidelines through chat calls.
pub struct GuidelineEngine<'a> {
    provider: &'a dyn Provider,
    prompts: &'a PromptRegistry,
    options: ChatOptions,
    ledger: &'a UsageLedger,
}

const FORMAT_REMINDER: &str = "\n\nReminder: respond exactly in the requested output format, with a 'Problem:' line followed by '<step 1>:', '<step 2>:', ... lines and nothing else.";

impl<'a> GuidelineEngine<'a> {
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

    fn chat(&self, tag: &str, prompt: &str) -> Result<String, ProviderError> {
        let resp = self.provider.chat(&self.options.request(prompt))?;
        self.ledger.record(tag, &resp.usage);
        Ok(resp.content)
    }

    /// Induce one abstract guideline from retrieved entries. A malformed
    /// reply is retried once with a format reminder before failing.
    pub fn induce_guideline(
        &self,
        _problem: &Problem,
        retrieved: &[&MemoryEntry],
    ) -> Result<Guideline, GuidelineError> {
        if retrieved.is_empty() {
            return Err(GuidelineError::NoExamples);
        }
        let samples: Vec<(&str, &crate::model::Trajectory)> = retrieved
            .iter()
            .map(|e| (e.problem.statement.as_str(), &e.trajectory))
            .collect();
        let prompt = self.prompts.render(
            TemplateId::GuidelineGeneration,
            &[(placeholder::POSITIVE_SAMPLES, &render_positive_samples(&samples))],
        );

        let reply = self.chat("induce", &prompt)?;
        let parsed = match parse_guideline(&reply) {
            Ok(g) => g,
            Err(first_err) => {
                log::warn!("guideline reply unparseable ({first_err}); retrying with format reminder");
                let retry_prompt = format!("{prompt}{FORMAT_REMINDER}");
                let reply = self.chat("induce", &retry_prompt)?;
                parse_guideline(&reply).map_err(GuidelineError::Parse)?
            }
        };
        Ok(Guideline {
            source_entry_ids: retrieved.iter().map(|e| e.entry_id.clone()).collect(),
            ..parsed
        })
    }

    /// Rewrite `g` into `m` structurally parallel variants. The original is
    /// always branch 1; each rewrite must keep the step count, violations
    /// are regenerated once and then replaced by the original.
    pub fn rewrite_guidelines(
        &self,
        g: &Guideline,
        m: usize,
    ) -> Result<Vec<Guideline>, GuidelineError> {
        let mut variants = Vec::with_capacity(m.max(1));
        variants.push(g.clone());
        for branch in 2..=m {
            let variant = match self.rewrite_once(g)? {
                Some(v) => v,
                None => match self.rewrite_once(g)? {
                    Some(v) => v,
                    None => {
                        log::warn!(
                            "branch {branch}: rewrite violated the step-count constraint twice; substituting the original guideline"
                        );
                        g.clone()
                    }
                },
            };
            variants.push(variant);
        }
        Ok(variants)
    }

    /// One rewrite call; `None` when the reply is unparseable or breaks the
    /// step-count constraint.
    fn rewrite_once(&self, g: &Guideline) -> Result<Option<Guideline>, GuidelineError> {
        let prompt = self.prompts.render(
            TemplateId::GuidelineRewriting,
            &[
                (placeholder::QUESTION, g.core_problem.as_str()),
                (placeholder::CHAIN_OF_THOUGHT, g.render_steps().as_str()),
            ],
        );
        let reply = self.chat("rewrite", &prompt)?;
        match parse_guideline(&reply) {
            Ok(parsed) if parsed.steps.len() == g.steps.len() => Ok(Some(Guideline {
                core_problem: if parsed.core_problem.is_empty() {
                    g.core_problem.clone()
                } else {
                    parsed.core_problem
                },
                steps: parsed.steps,
                source_entry_ids: g.source_entry_ids.clone(),
            })),
            Ok(parsed) => {
                log::warn!(
                    "rewrite returned {} steps, expected {}",
                    parsed.steps.len(),
                    g.steps.len()
                );
                Ok(None)
            }
            Err(e) => {
                log::warn!("rewrite reply unparseable: {e}");
                Ok(None)
            }
        }
    }

    /// Alternative mode: induce each branch's guideline independently from
    /// the same retrieved entries instead of rewriting one anchor.
    pub fn induce_per_branch(
        &self,
        problem: &Problem,
        retrieved: &[&MemoryEntry],
        m: usize,
    ) -> Result<Vec<Guideline>, GuidelineError> {
        (0..m.max(1))
            .map(|_| self.induce_guideline(problem, retrieved))
            .collect()
    }
}
