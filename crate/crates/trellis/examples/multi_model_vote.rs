//! Multi-model collaboration: each branch is driven by a different model
//! and the accepted step is chosen by weighted voting over per-model
//! confidence scores.
//!
//! ```bash
//! cargo run -p trellis --example multi_model_vote
//! ```

use trellis::forest::{ExecConfig, ForestExecutor};
use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, ModelSpec, Provider, ScriptedReply, UsageLedger};
use trellis::weighted_vote;

fn main() -> anyhow::Result<()> {
    // The pure voting rule first: argmax over weight-scaled scores.
    let scores = vec![
        vec![0.6, 0.4], // model one's confidence in candidates 1 and 2
        vec![0.3, 0.7], // model two's
    ];
    let uniform = weighted_vote(&scores, &[1.0, 1.0])?;
    let skewed = weighted_vote(&scores, &[4.0, 1.0])?;
    println!("uniform weights pick candidate {uniform}; upweighting model one picks {skewed}\n");

    // Now inside a run: three branches on three models, one step.
    let script = vec![
        ScriptedReply::new("Problem: demo\n<step 1>: Work out the answer."),
        ScriptedReply::new("New Guideline:\n<step 1>: Compute it directly."),
        ScriptedReply::new("New Guideline:\n<step 1>: Reason it out loud."),
        // One proposal per branch, each from its own model.
        ScriptedReply::new("model-a says 41"),
        ScriptedReply::new("model-b says 42"),
        ScriptedReply::new("model-c says 42, confidently"),
        // Each model scores all three candidates 0-10.
        ScriptedReply::new("candidate 1: 6\ncandidate 2: 7\ncandidate 3: 8"),
        ScriptedReply::new("candidate 1: 2\ncandidate 2: 9\ncandidate 3: 7"),
        ScriptedReply::new("candidate 1: 3\ncandidate 2: 6\ncandidate 3: 9"),
        ScriptedReply::new("The final answer is: 42"),
    ];
    let mock = MockProvider::new(script, 16, 2);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let cfg = ExecConfig {
        branches: 3,
        refinement_enabled: false,
        collaboration: Some(vec![
            ModelSpec::new("model-a"),
            ModelSpec::new("model-b"),
            ModelSpec::new("model-c"),
        ]),
        ..ExecConfig::default()
    };
    let executor = ForestExecutor::new(&mock, &prompts, ChatOptions::new("model-a"), cfg, &ledger);

    let mut store = MemoryStore::in_memory(16);
    let seed = Problem::math("s", "a seed problem", "1")?;
    let trajectory = Trajectory::new(
        "s",
        vec![ReasoningStep::new(1, "solve", Origin::Cot).unwrap()],
        "1",
    )?
    .mark_verified();
    store.append(EntryDraft::new(seed, trajectory, mock.embed("a seed problem")?, Origin::Cot))?;

    let problem = Problem::math("q", "What is 6 * 7?", "42")?;
    let outcome = executor.run_forest(&problem, &store)?;

    println!("per-branch routing:");
    for req in mock.captured_requests() {
        if req.messages[0].content.contains("Execute the guideline") {
            println!("  proposal request went to {}", req.model_id);
        }
    }
    let step = &outcome.trace.steps[0];
    println!("\nvote verdict: {}", step.verdict);
    println!("accepted candidate {}: {}", step.chosen, step.accepted.text);
    println!("final answer: {}", outcome.answer);
    Ok(())
}
