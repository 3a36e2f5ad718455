//! Prompt template registry.
//!
//! Templates are plain text with literal `<...>` placeholder markers that
//! rendering substitutes. The default set ships embedded; a registry
//! directory can override any template by file name (`<name>.txt`).
//!
//! The eight default reasoning templates are kept verbatim, including their
//! original wording quirks, because downstream golden tests pin them byte
//! for byte. Do not "fix" their phrasing.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::model::ReasoningStep;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown template name: {0}")]
    UnknownTemplate(String),
    #[error("failed to read template {name}: {source}")]
    Read {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

/// Placeholder markers used inside templates.
pub mod placeholder {
    pub const QUESTION: &str = "<Your Question>";
    pub const GROUND_TRUTH: &str = "<Ground Truth>";
    pub const POSITIVE_SAMPLES: &str = "<Positive Samples>";
    pub const CHAIN_OF_THOUGHT: &str = "<Your Chain of Thought>";
    pub const PREVIOUS_STEPS: &str = "<Previous Steps>";
    pub const CURRENT_GUIDELINE_STEP: &str = "<Guideline of Current Step>";
    pub const ANSWER_LIST: &str = "<Answer List of Current Step>";
    pub const CURRENT_STEP: &str = "<Current Step>";
    pub const RESULT: &str = "<Your Result>";
}

const COT: &str = "Task Description: You are a math expert skilled in step-by-step reasoning. Solve the problem methodically, clearly showing each step of your reasoning. Wrap the final answer in the format: <answer>Your Answer</answer>. Ensure your response is concise and well-structured.

Question: <Your Question>

Solution:
";

const RECTIFY: &str = "Task Description: You are a math expert skilled in step-by-step reasoning. Solve the problem methodically, clearly showing each step of your reasoning. Wrap the final answer in the format: <answer>Your Answer</answer>. Ensure your response is concise and well-structured.

The question which you are facing is <Your Question>
The correct answer is <Ground Truth>

Please reference the correct answer, give the correct reasoning results.

Solution:
";

const GUIDELINE_GENERATION: &str = "Task Description: You're an expert at math reasoning. You need to extract the core of a problem and chain of thought from examples as concise as possible. You need to complete the below tasks:

1. Observe the Positive Samples: Carefully analyze the problem descriptions and solutions of each positive sample.
2. Summarize the Guideline: Based on these samples, summarize a general guideline as concise as possible for solving this type of problem.

Positive Samples:
<Positive Samples>

Output Format
Problem: <core problem>
Chain of Thought:
<step 1>: [First step of the guideline]
<step 2>: [Second step of the guideline]
<step 3>: [Third step of the guideline]

Please format your summary using the above step-by-step structure. Ensure that each step is as specific and concise as possible and directly addresses the problem.
";

const GUIDELINE_REWRITING: &str = "Task Description: You are a math expert and kill at reasoning. You need to complete the below tasks:
1.Rewrite the Guideline from Different Perspectives: Provide multiple versions of the guideline, each emphasizing a different aspect or approach.
2. Maintain the Same Structure: Ensure each version has the same number of steps and maintains the logical order of the original guideline.
3. Ensure Clarity and Conciseness: Make sure each version is clear and to the point.

Original Problem: <Your Question>

Original Guideline: <Your Chain of Thought>

Output Format:
New Guideline:
<step 1>: [First step of the guideline]
<step 2>: [Second step of the guideline]
<step 3>: [Third step of the guideline]
";

const GUIDELINE_EXECUTION: &str = "Task Information: You are a math expert. Your task is to solve a given problem by executing a guideline provided for each step to reach the correct answer.

Question: <Your Question>

Previous analysis: <Previous Steps>

Execute the guideline: <Guideline of Current Step>. Please provide a concise result.
";

const AGGREGATION: &str = "Task Description: You are an expert in reasoning and will choose the best result from the given candidates.

Question: <Your Question>

Answers List: <Answer List of Current Step>

Select the most logically sound and informative answer. Finally, directly return <answer {} is the best>, in which {} is 1, 2, or 3.
";

const REFINE: &str = "Task Description: You are an expert in this task and will refine the response with precise corrections. Analyze the result carefully and identify any logical errors, inconsistencies, or missing details.
If needed, provide a refined and corrected version of the result.

Question: <Your Question>

Current Step: <Current Step>

Result: <Your Result>
";

const CONCLUSION: &str = "Task Information: You are an expert in this task and please provide a structured final conclusion based ob previous analysis.

Previous Analysis
You have completed an analysis for the question: <Your Question>

Here are the analysis steps performed: <Previous Steps>

Based on the above analysis, summarize the final causal conclusion in a short, clear and structured manner.

Output format
<The final answer is: answer>
";

const TOT_PROPOSE: &str = "Task Description: You are a math expert exploring solution paths step by step. Given the problem and the reasoning so far, propose the single next reasoning step. If the next step completes the solution, also wrap the final answer in the format: <answer>Your Answer</answer>.

Question: <Your Question>

Reasoning so far: <Previous Steps>

Next step:
";

const TOT_SCORE: &str = "Task Description: You are a strict judge of mathematical reasoning. Rate how promising the following partial reasoning is for solving the problem, on a scale from 1 to 10. Reply with the format: <score N> where N is an integer from 1 to 10.

Question: <Your Question>

Partial reasoning: <Previous Steps>

Score:
";

const COLLAB_SCORE: &str = "Task Description: You are an expert in reasoning and will score each candidate result for the current step. Rate every candidate on a scale from 0 to 10 for logical soundness and usefulness. Reply with one line per candidate in the format: candidate N: score.

Question: <Your Question>

Answers List: <Answer List of Current Step>

Scores:
";

const REACT: &str = "Task Description: You are an expert problem solver. Work through the problem by interleaving Thought, Action, and Observation lines. Actions are reasoning operations such as calculating or checking; state each observation explicitly. Finish with the final answer in the format: <answer>Your Answer</answer>.

Question: <Your Question>

Trace:
";

// Experimental: no reference wording exists for judge-based verification,
// so this template is a local design and may change.
const LLM_VERIFY: &str = "Task Description: You are a strict grader. Decide whether the candidate answer is equivalent to the reference answer for the given question. Reply with exactly one word: yes or no.

Question: <Your Question>

Reference answer: <Ground Truth>

Candidate answer: <Your Result>

Verdict:
";

/// Identifies one template in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    Cot,
    Rectify,
    GuidelineGeneration,
    GuidelineRewriting,
    GuidelineExecution,
    Aggregation,
    Refine,
    Conclusion,
    TotPropose,
    TotScore,
    CollabScore,
    React,
    LlmVerify,
}

impl TemplateId {
    /// The eight templates with pinned default wording.
    pub const DEFAULT_SET: [TemplateId; 8] = [
        TemplateId::Cot,
        TemplateId::Rectify,
        TemplateId::GuidelineGeneration,
        TemplateId::GuidelineRewriting,
        TemplateId::GuidelineExecution,
        TemplateId::Aggregation,
        TemplateId::Refine,
        TemplateId::Conclusion,
    ];

    pub fn all() -> &'static [TemplateId] {
        &[
            TemplateId::Cot,
            TemplateId::Rectify,
            TemplateId::GuidelineGeneration,
            TemplateId::GuidelineRewriting,
            TemplateId::GuidelineExecution,
            TemplateId::Aggregation,
            TemplateId::Refine,
            TemplateId::Conclusion,
            TemplateId::TotPropose,
            TemplateId::TotScore,
            TemplateId::CollabScore,
            TemplateId::React,
            TemplateId::LlmVerify,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::Cot => "cot",
            TemplateId::Rectify => "rectify",
            TemplateId::GuidelineGeneration => "guideline_generation",
            TemplateId::GuidelineRewriting => "guideline_rewriting",
            TemplateId::GuidelineExecution => "guideline_execution",
            TemplateId::Aggregation => "aggregation",
            TemplateId::Refine => "refine",
            TemplateId::Conclusion => "conclusion",
            TemplateId::TotPropose => "tot_propose",
            TemplateId::TotScore => "tot_score",
            TemplateId::CollabScore => "collab_score",
            TemplateId::React => "react",
            TemplateId::LlmVerify => "llm_verify",
        }
    }

    fn builtin_text(&self) -> &'static str {
        match self {
            TemplateId::Cot => COT,
            TemplateId::Rectify => RECTIFY,
            TemplateId::GuidelineGeneration => GUIDELINE_GENERATION,
            TemplateId::GuidelineRewriting => GUIDELINE_REWRITING,
            TemplateId::GuidelineExecution => GUIDELINE_EXECUTION,
            TemplateId::Aggregation => AGGREGATION,
            TemplateId::Refine => REFINE,
            TemplateId::Conclusion => CONCLUSION,
            TemplateId::TotPropose => TOT_PROPOSE,
            TemplateId::TotScore => TOT_SCORE,
            TemplateId::CollabScore => COLLAB_SCORE,
            TemplateId::React => REACT,
            TemplateId::LlmVerify => LLM_VERIFY,
        }
    }
}

/// Holds the active text of every template.
#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<&'static str, String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    /// Registry with the embedded default templates.
    pub fn builtin() -> Self {
        let templates = TemplateId::all()
            .iter()
            .map(|id| (id.name(), id.builtin_text().to_string()))
            .collect();
        Self { templates }
    }

    /// Builtin defaults, with any `<name>.txt` file in `dir` overriding the
    /// template of the same name.
    pub fn with_overrides_from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut reg = Self::builtin();
        for id in TemplateId::all() {
            let path = dir.join(format!("{}.txt", id.name()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Read {
                    name: id.name().to_string(),
                    source,
                })?;
                reg.templates.insert(id.name(), text);
            }
        }
        Ok(reg)
    }

    /// Raw template text.
    pub fn template(&self, id: TemplateId) -> &str {
        &self.templates[id.name()]
    }

    /// Substitute placeholder markers and return the finished prompt.
    pub fn render(&self, id: TemplateId, substitutions: &[(&str, &str)]) -> String {
        let mut text = self.templates[id.name()].clone();
        for (marker, value) in substitutions {
            text = text.replace(marker, value);
        }
        text
    }

    /// Write every template out as `<name>.txt`, seeding a registry directory.
    pub fn export_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for id in TemplateId::all() {
            std::fs::write(dir.join(format!("{}.txt", id.name())), self.template(*id))?;
        }
        Ok(())
    }
}

/// Render an accepted-prefix block for execution, conclusion, and refine
/// prompts: numbered `Step i:` lines, or `None.` when the prefix is empty.
pub fn render_previous_steps(steps: &[ReasoningStep]) -> String {
    if steps.is_empty() {
        return "None.".to_string();
    }
    steps
        .iter()
        .map(|s| format!("Step {}: {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render a numbered candidate list for aggregation and scoring prompts.
pub fn render_answer_list(candidates: &[&str]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Answer {}: {}", i + 1, text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Render retrieved entries as positive samples for guideline induction.
pub fn render_positive_samples(samples: &[(&str, &crate::model::Trajectory)]) -> String {
    let mut out = String::new();
    for (i, (statement, trajectory)) in samples.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Positive Sample {}:\n", i + 1));
        out.push_str(&format!("Question: {}\n", statement));
        out.push_str("Solution:\n");
        for step in &trajectory.steps {
            out.push_str(&format!("<step> {}\n", step.text));
        }
        out.push_str(&format!(
            "<The final answer is: {}>\n",
            trajectory.final_answer
        ));
    }
    out
}
