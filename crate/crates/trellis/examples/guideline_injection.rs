//! Single-path guideline injection: retrieve, induce one guideline, and
//! prepend it to a plain chain-of-thought prompt instead of running the full
//! multi-branch machinery.
//!
//! ```bash
//! cargo run -p trellis --example guideline_injection
//! ```

use trellis::forest::{BaseMethod, ExecConfig, ForestExecutor};
use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, Provider, ScriptedReply, UsageLedger};

fn main() -> anyhow::Result<()> {
    let script = vec![
        ScriptedReply::new(
            "Problem: coordinate conversion\n\
             <step 1>: Identify the coordinate system.\n\
             <step 2>: Apply the conversion formulas and check ranges.",
        ),
        ScriptedReply::new(
            "Step 1: rectangular (0,3). Step 2: r = 3, θ = π/2. <answer>(3, π/2)</answer>",
        ),
    ];
    let mock = MockProvider::new(script, 16, 4);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let executor = ForestExecutor::new(
        &mock,
        &prompts,
        ChatOptions::new("mock-model"),
        ExecConfig::default(),
        &ledger,
    );

    let mut store = MemoryStore::in_memory(16);
    let seed = Problem::math("m1", "Convert (1,1) to polar coordinates.", "(√2, π/4)")?;
    let trajectory = Trajectory::new(
        "m1",
        vec![ReasoningStep::new(1, "r = √(x²+y²), θ by quadrant", Origin::Cot).unwrap()],
        "(√2, π/4)",
    )?
    .mark_verified();
    store.append(EntryDraft::new(
        seed,
        trajectory,
        mock.embed("Convert (1,1) to polar coordinates.")?,
        Origin::Cot,
    ))?;

    let problem = Problem::math("q", "Convert the point (0,3) to polar coordinates.", "(3, π/2)")?;
    let answer = executor.guideline_injection(&problem, &store, BaseMethod::Cot)?;

    let prompt = &mock.captured_requests()[1].messages[0].content;
    println!("the injected prompt starts with the guideline block:\n");
    for line in prompt.lines().take(5) {
        println!("  | {line}");
    }
    println!("  | ...\n");
    println!("answer: {answer}");
    println!("correct: {}", trellis::verify(&problem, &answer)?);
    Ok(())
}
