//! Full offline pipeline: train a gold-trajectory memory from a labeled
//! dataset, then evaluate new problems with multi-branch stepwise execution.
//!
//! Everything runs against the scripted mock provider, so the output is
//! deterministic and no API key is needed.
//!
//! ```bash
//! cargo run -p trellis --example end_to_end_mock
//! ```

use trellis::bench::{EvalMode, Session};
use trellis::gold::BuildConfig;
use trellis::forest::ExecConfig;
use trellis::memory::MemoryStore;
use trellis::model::Problem;
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, ScriptedReply, UsageLedger};

fn main() -> anyhow::Result<()> {
    let train_problems = vec![
        Problem::math("t1", "What is 6 * 7?", "42")?,
        Problem::math("t2", "What is 5 + 5?", "10")?,
    ];
    let eval_problems = vec![Problem::math("e1", "What is 12 + 30?", "42")?];

    // Script every chat reply the pipeline will request, in call order.
    let mut script = vec![
        // t1: the plain chain-of-thought attempt is already correct.
        ScriptedReply::new("Step 1: 6 * 7 = 42. <answer>42</answer>"),
        // t2: first attempt wrong, label-guided round 1 fixes it.
        ScriptedReply::new("Step 1: 5 + 5 = 11. <answer>11</answer>"),
        ScriptedReply::new("Step 1: 5 + 5 = 10. <answer>10</answer>"),
        // e1: induce one guideline, rewrite into two more branches...
        ScriptedReply::new("Problem: simple arithmetic\n<step 1>: Add the numbers carefully."),
        ScriptedReply::new("New Guideline:\n<step 1>: Sum the terms one digit at a time."),
        ScriptedReply::new("New Guideline:\n<step 1>: Estimate first, then add exactly."),
    ];
    // ...three branches propose and refine, a judge picks, one conclusion.
    for branch in 1..=3 {
        script.push(ScriptedReply::new(format!("12 + 30 = 42 (branch {branch})")));
        script.push(ScriptedReply::new(format!("Checked: 42 is right (branch {branch})")));
    }
    script.push(ScriptedReply::new("answer 2 is the best"));
    script.push(ScriptedReply::new("The final answer is: 42"));

    let mock = MockProvider::new(script, 16, 7);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let session = Session::new(&mock, &prompts, ChatOptions::new("mock-model"), &ledger);

    let dir = tempfile::tempdir()?;
    let mut store = MemoryStore::create(&dir.path().join("store"), 16)?;

    println!("=== training ===");
    let train_report =
        session.run_train(&train_problems, &mut store, &BuildConfig::default(), None);
    print!("{}", train_report.render_table());

    println!("\n=== evaluation ===");
    let (eval_report, traces) =
        session.run_eval(&eval_problems, &store, &ExecConfig::default(), EvalMode::Forest);
    print!("{}", eval_report.render_table());

    println!("\naccepted reasoning for e1:");
    for step in &traces[0].steps {
        println!("  step {}: {}", step.index, step.accepted.text);
    }
    println!("conclusion: {}", traces[0].answer.as_deref().unwrap_or("-"));

    println!("\ntoken usage by pipeline stage:");
    for (tag, totals) in ledger.by_tag() {
        println!(
            "  {tag:<14} {} calls  {} tokens",
            totals.calls,
            totals.total()
        );
    }
    Ok(())
}
