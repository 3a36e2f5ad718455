//! Induce an abstract guideline from retrieved gold trajectories, then
//! rewrite it into structurally parallel branch variants (same step count,
//! different emphasis).
//!
//! ```bash
//! cargo run -p trellis --example guideline_induction
//! ```

use trellis::guideline::GuidelineEngine;
use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, Provider, ScriptedReply, UsageLedger};

fn main() -> anyhow::Result<()> {
    let script = vec![
        // Induction reply in the expected output format.
        ScriptedReply::new(
            "Problem: Converting a point between coordinate systems.\n\
             Chain of Thought:\n\
             <step 1>: Identify the given point's current coordinate system and values.\n\
             <step 2>: Apply the appropriate conversion formulas.\n\
             <step 3>: Ensure all angles are in their required ranges.",
        ),
        // Two rewrites, each keeping the three-step structure.
        ScriptedReply::new(
            "New Guideline:\n\
             <step 1>: Note the source coordinate system and record the values.\n\
             <step 2>: Execute the conversion math for the target system.\n\
             <step 3>: Normalize angles into their standard intervals.",
        ),
        ScriptedReply::new(
            "New Guideline:\n\
             <step 1>: Determine what kind of coordinates you were given.\n\
             <step 2>: Transform them with the right formulas.\n\
             <step 3>: Double-check the angular domain constraints.",
        ),
    ];
    let mock = MockProvider::new(script, 16, 3);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let engine = GuidelineEngine::new(&mock, &prompts, ChatOptions::new("mock-model"), &ledger);

    // Three retrieved coordinate-conversion experiences.
    let mut store = MemoryStore::in_memory(16);
    let solved = [
        ("g1", "Convert (-2, -2√3, -1) to cylindrical coordinates.", "(4, 4π/3, -1)"),
        ("g2", "Convert (√2, -√2) to polar coordinates.", "(2, 7π/4)"),
        ("g3", "Convert ρ=3, θ=0, φ=0 to rectangular coordinates.", "(0, 0, 3)"),
    ];
    for (id, statement, answer) in solved {
        let problem = Problem::math(id, statement, answer)?;
        let trajectory = Trajectory::new(
            id,
            vec![ReasoningStep::new(1, "apply the conversion formulas", Origin::Cot).unwrap()],
            answer,
        )?
        .mark_verified();
        let embedding = mock.embed(statement)?;
        store.append(EntryDraft::new(problem, trajectory, embedding, Origin::Cot))?;
    }

    let problem = Problem::math(
        "q",
        "Convert the point (0,3) in rectangular coordinates to polar coordinates.",
        "(3, π/2)",
    )?;
    let query = mock.embed(&problem.statement)?;
    let hits = store.retrieve_top_k(&query, 3)?;
    let retrieved: Vec<_> = hits.iter().map(|(e, _)| *e).collect();

    let anchor = engine.induce_guideline(&problem, &retrieved)?;
    println!("induced guideline (core problem: {}):", anchor.core_problem);
    for (i, step) in anchor.steps.iter().enumerate() {
        println!("  <step {}>: {}", i + 1, step);
    }
    println!("  sources: {:?}", anchor.source_entry_ids);

    let branches = engine.rewrite_guidelines(&anchor, 3)?;
    for (i, branch) in branches.iter().enumerate().skip(1) {
        println!("\nbranch {} rewrite ({} steps):", i + 1, branch.len());
        for (j, step) in branch.steps.iter().enumerate() {
            println!("  <step {}>: {}", j + 1, step);
        }
    }
    println!(
        "\nall branches share one step count: {}",
        branches.iter().all(|b| b.len() == anchor.len())
    );
    Ok(())
}
