//! The ablation knobs: stepwise vs final aggregation and the refinement
//! toggle, compared by their chat-call budgets on the same problem shape.
//!
//! ```bash
//! cargo run -p trellis --example aggregation_modes
//! ```

use trellis::forest::{AggregationMode, ExecConfig, ForestExecutor};
use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, Provider, ScriptedReply, UsageLedger};

const M: usize = 3;
const T: usize = 2;

fn script_for(refine: bool, mode: AggregationMode) -> Vec<ScriptedReply> {
    let steps: String = (1..=T)
        .map(|i| format!("<step {i}>: instruction {i}"))
        .collect::<Vec<_>>()
        .join("\n");
    let mut script = vec![ScriptedReply::new(format!("Problem: demo\n{steps}"))];
    for _ in 1..M {
        script.push(ScriptedReply::new(format!("New Guideline:\n{steps}")));
    }
    let branch_step = |b: usize, t: usize| {
        let mut replies = vec![ScriptedReply::new(format!("candidate b{b} t{t}"))];
        if refine {
            replies.push(ScriptedReply::new(format!("refined b{b} t{t}")));
        }
        replies
    };
    match mode {
        AggregationMode::Stepwise => {
            for t in 1..=T {
                for b in 1..=M {
                    script.extend(branch_step(b, t));
                }
                script.push(ScriptedReply::new("answer 1 is the best"));
            }
        }
        AggregationMode::Final => {
            for b in 1..=M {
                for t in 1..=T {
                    script.extend(branch_step(b, t));
                }
            }
            script.push(ScriptedReply::new("answer 1 is the best"));
        }
    }
    script.push(ScriptedReply::new("The final answer is: 42"));
    script
}

fn run(refine: bool, mode: AggregationMode) -> anyhow::Result<(usize, usize)> {
    let mock = MockProvider::new(script_for(refine, mode), 16, 0);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let cfg = ExecConfig {
        branches: M,
        refinement_enabled: refine,
        aggregation_mode: mode,
        ..ExecConfig::default()
    };
    let executor = ForestExecutor::new(&mock, &prompts, ChatOptions::new("m"), cfg, &ledger);

    let mut store = MemoryStore::in_memory(16);
    let seed = Problem::math("s", "seed problem", "1")?;
    let trajectory = Trajectory::new(
        "s",
        vec![ReasoningStep::new(1, "work", Origin::Cot).unwrap()],
        "1",
    )?
    .mark_verified();
    store.append(EntryDraft::new(
        seed,
        trajectory,
        mock.embed("seed problem")?,
        Origin::Cot,
    ))?;

    let problem = Problem::math("q", "the demo problem", "42")?;
    let outcome = executor.run_forest(&problem, &store)?;
    let judge_calls = ledger.by_tag().get("aggregate").map(|t| t.calls).unwrap_or(0);
    assert_eq!(outcome.answer, "42");
    Ok((mock.calls_served(), judge_calls as usize))
}

fn main() -> anyhow::Result<()> {
    println!("M = {M} branches, T = {T} guideline steps\n");
    println!("{:<34} {:>11} {:>12}", "configuration", "chat calls", "judge calls");
    for (refine, mode) in [
        (true, AggregationMode::Stepwise),
        (false, AggregationMode::Stepwise),
        (true, AggregationMode::Final),
        (false, AggregationMode::Final),
    ] {
        let (calls, judges) = run(refine, mode)?;
        let label = format!(
            "{}, refinement {}",
            match mode {
                AggregationMode::Stepwise => "stepwise aggregation",
                AggregationMode::Final => "final aggregation",
            },
            if refine { "on" } else { "off" },
        );
        println!("{label:<34} {calls:>11} {judges:>12}");
    }
    println!(
        "\nstepwise aggregation judges every step (T judge calls); final\n\
         aggregation runs branches independently and judges once at the end."
    );
    Ok(())
}
