//! One full multi-branch stepwise run, printing the whole trace: per-step
//! branch candidates, refinements, judge verdicts, the shared accepted
//! prefix, and the conclusion.
//!
//! ```bash
//! cargo run -p trellis --example forest_run
//! ```

use trellis::forest::{ExecConfig, ForestExecutor};
use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, Provider, ScriptedReply, UsageLedger};

fn main() -> anyhow::Result<()> {
    let mut script = vec![
        ScriptedReply::new(
            "Problem: polar conversion\n\
             <step 1>: Compute the radius r.\n\
             <step 2>: Determine the angle θ and state the answer.",
        ),
        ScriptedReply::new(
            "New Guideline:\n<step 1>: Find r from x and y.\n<step 2>: Place θ by quadrant and conclude.",
        ),
        ScriptedReply::new(
            "New Guideline:\n<step 1>: Derive the radial distance.\n<step 2>: Fix the angle and finish.",
        ),
    ];
    // Step 1: three branches propose and refine, judge picks branch 2.
    script.extend([
        ScriptedReply::new("r = sqrt(0^2 + 3^2) = 3"),
        ScriptedReply::new("Confirmed: r = 3."),
        ScriptedReply::new("radius comes out to 3"),
        ScriptedReply::new("Yes, the radius is exactly 3."),
        ScriptedReply::new("r = 9? No wait."),
        ScriptedReply::new("Correction: r = 3, not 9."),
        ScriptedReply::new("answer 2 is the best"),
    ]);
    // Step 2: same shape.
    script.extend([
        ScriptedReply::new("θ = π/2 since the point sits on the positive y-axis; (3, π/2)"),
        ScriptedReply::new("Verified: θ = π/2, so the answer is (3, π/2)."),
        ScriptedReply::new("The angle is 90 degrees, i.e. π/2; answer (3, π/2)"),
        ScriptedReply::new("Consistent: (3, π/2)."),
        ScriptedReply::new("θ = 3π/2? That is the negative axis."),
        ScriptedReply::new("Fixed: θ = π/2, final (3, π/2)."),
        ScriptedReply::new("answer 1 is the best"),
    ]);
    script.push(ScriptedReply::new(
        "<The final answer is: The polar coordinates of the point (0,3) are (3, π/2)>",
    ));

    let mock = MockProvider::new(script, 16, 1);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let executor = ForestExecutor::new(
        &mock,
        &prompts,
        ChatOptions::new("mock-model"),
        ExecConfig::default(),
        &ledger,
    );

    // Seed memory with a few conversion experiences for retrieval.
    let mut store = MemoryStore::in_memory(16);
    for (i, text) in [
        "Convert (1,1) to polar coordinates.",
        "Convert (-2,-2√3,-1) to cylindrical coordinates.",
        "Convert (0,-5) to polar coordinates.",
    ]
    .iter()
    .enumerate()
    {
        let id = format!("m{i}");
        let problem = Problem::math(&id, *text, "x")?;
        let trajectory = Trajectory::new(
            &id,
            vec![ReasoningStep::new(1, "use the conversion formulas", Origin::Cot).unwrap()],
            "x",
        )?
        .mark_verified();
        store.append(EntryDraft::new(problem, trajectory, mock.embed(text)?, Origin::Cot))?;
    }

    let problem = Problem::math(
        "q",
        "Convert the point (0,3) in rectangular coordinates to polar coordinates.",
        "The polar coordinates of the point (0,3) are (3, π/2)",
    )?;
    let outcome = executor.run_forest(&problem, &store)?;

    println!("guideline branches:");
    for (i, g) in outcome.trace.guidelines.iter().enumerate() {
        println!("  branch {}: {:?}", i + 1, g.steps);
    }
    for step in &outcome.trace.steps {
        println!("\nstep {}:", step.index);
        for (b, candidate) in step.refined.iter().enumerate() {
            println!("  branch {} candidate: {}", b + 1, candidate.text);
        }
        println!("  judge: {}", step.verdict);
        println!("  accepted -> {}", step.accepted.text);
    }
    println!("\nanswer: {}", outcome.answer);
    println!(
        "chat calls: {} ({} branches x {} steps, plus induction, judging, conclusion)",
        mock.calls_served(),
        outcome.trace.guidelines.len(),
        outcome.trace.steps.len(),
    );
    Ok(())
}
