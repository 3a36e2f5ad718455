//! Judge-scored best-first step exploration (tree-of-thought style).
//!
//! Each expansion proposes `breadth` candidate next steps for the current
//! best node; complete candidates (those carrying an answer marker) are
//! checked immediately, incomplete expandable ones are scored 1-10 by a
//! judge call and queued. Score parse failures count as 0. Ties in the
//! frontier break toward the older node, which keeps the search order
//! deterministic under a scripted provider.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::model::{Guideline, Origin, Problem, ReasoningStep, Trajectory};
use crate::prompts::{placeholder, render_previous_steps, PromptRegistry, TemplateId};
use crate::provider::{ChatOptions, Provider, ProviderError, UsageLedger};
use crate::verifier::extract_answer;

#[derive(Debug, Clone, Copy)]
pub struct TotParams {
    pub breadth: usize,
    pub depth: usize,
}

/// A completed search path and its extracted answer.
#[derive(Debug, Clone)]
pub struct TotCandidate {
    pub trajectory: Trajectory,
    pub answer: String,
}

/// Search result plus the number of proposal calls spent.
#[derive(Debug, Clone)]
pub struct TotRun {
    pub candidate: Option<TotCandidate>,
    pub proposals: u32,
}

static SCORE_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)<score\s*(\d+)>").unwrap());
static BARE_NUMBER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b(\d{1,2})\b").unwrap());

/// Parse a judge reply into a 0-10 score; unparseable replies score 0.
pub fn parse_score(reply: &str) -> u32 {
    let raw = SCORE_RE
        .captures(reply)
        .or_else(|| BARE_NUMBER_RE.captures(reply))
        .and_then(|caps| caps[1].parse::<u32>().ok())
        .unwrap_or(0);
    raw.min(10)
}

struct Node {
    path: Vec<ReasoningStep>,
    score: u32,
    seq: u64,
}

pub struct TotSearch<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptRegistry,
    pub options: &'a ChatOptions,
    pub ledger: &'a UsageLedger,
    /// When set, this block is prepended to every proposal prompt.
    pub guideline: Option<&'a Guideline>,
}

impl<'a> TotSearch<'a> {
    fn chat(&self, tag: &str, prompt: &str) -> Result<String, ProviderError> {
        let resp = self.provider.chat(&self.options.request(prompt))?;
        self.ledger.record(tag, &resp.usage);
        Ok(resp.content)
    }

    fn proposal_prompt(&self, problem: &Problem, path: &[ReasoningStep]) -> String {
        let base = self.prompts.render(
            TemplateId::TotPropose,
            &[
                (placeholder::QUESTION, problem.statement.as_str()),
                (placeholder::PREVIOUS_STEPS, &render_previous_steps(path)),
            ],
        );
        match self.guideline {
            Some(g) => format!("Guideline:\n{}\n{}", g.render_steps(), base),
            None => base,
        }
    }

    /// Search until a candidate satisfies `accept`, the frontier empties, or
    /// the depth bound cuts off every path.
    pub fn run(
        &self,
        problem: &Problem,
        params: TotParams,
        accept: &mut dyn FnMut(&str) -> Result<bool, ProviderError>,
    ) -> Result<TotRun, ProviderError> {
        let mut frontier = vec![Node {
            path: Vec::new(),
            score: u32::MAX, // the root always expands first
            seq: 0,
        }];
        let mut next_seq = 1u64;
        let mut proposals = 0u32;

        while let Some(best_pos) = frontier
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.score.cmp(&b.score).then(b.seq.cmp(&a.seq)))
            .map(|(i, _)| i)
        {
            let node = frontier.swap_remove(best_pos);

            // Propose the whole beam first, then check completions in order.
            let mut children: Vec<Vec<ReasoningStep>> = Vec::with_capacity(params.breadth);
            for _ in 0..params.breadth {
                let prompt = self.proposal_prompt(problem, &node.path);
                let reply = self.chat("tot_propose", &prompt)?;
                proposals += 1;
                let text = reply.trim();
                if text.is_empty() {
                    continue;
                }
                let step = ReasoningStep::new(node.path.len() + 1, text, Origin::Tot)
                    .expect("non-empty step text");
                let mut path = node.path.clone();
                path.push(step);
                children.push(path);
            }

            let mut incomplete: Vec<Vec<ReasoningStep>> = Vec::new();
            for path in children {
                let last_text = &path.last().unwrap().text;
                if let Some(answer) = extract_answer(last_text) {
                    if accept(&answer)? {
                        let trajectory = Trajectory::new(
                            problem.id.clone(),
                            path,
                            answer.clone(),
                        )
                        .expect("search paths are structurally valid");
                        return Ok(TotRun {
                            candidate: Some(TotCandidate { trajectory, answer }),
                            proposals,
                        });
                    }
                    // Complete but rejected: a dead leaf.
                } else if path.len() < params.depth {
                    incomplete.push(path);
                }
                // Incomplete at the depth bound: dead, not worth a judge call.
            }

            for path in incomplete {
                let prompt = self.prompts.render(
                    TemplateId::TotScore,
                    &[
                        (placeholder::QUESTION, problem.statement.as_str()),
                        (placeholder::PREVIOUS_STEPS, &render_previous_steps(&path)),
                    ],
                );
                let reply = self.chat("tot_score", &prompt)?;
                frontier.push(Node {
                    path,
                    score: parse_score(&reply),
                    seq: next_seq,
                });
                next_seq += 1;
            }
        }
        Ok(TotRun {
            candidate: None,
            proposals,
        })
    }
}
