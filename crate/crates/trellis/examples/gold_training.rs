//! The staged gold-trajectory builder: chain of thought, label-guided
//! regeneration, tree exploration, and memory-guided generation, stopping at
//! the first stage whose answer verifies against the label.
//!
//! ```bash
//! cargo run -p trellis --example gold_training
//! ```

use trellis::bench::Session;
use trellis::gold::BuildConfig;
use trellis::memory::MemoryStore;
use trellis::model::Problem;
use trellis::prompts::PromptRegistry;
use trellis::provider::{ChatOptions, MockProvider, ScriptedReply, UsageLedger};

fn main() -> anyhow::Result<()> {
    let problems = vec![
        Problem::math("easy", "What is 2 + 2?", "4")?,
        Problem::math("medium", "What is 17 * 3?", "51")?,
        Problem::math("hard", "What is the 8th Fibonacci number?", "21")?,
    ];

    let script = vec![
        // "easy": solved by the first chain-of-thought attempt.
        ScriptedReply::new("Step 1: 2 + 2 = 4. <answer>4</answer>"),
        // "medium": CoT wrong, then label-guided rounds 1-2 wrong, round 3 right.
        ScriptedReply::new("Step 1: 17 * 3 = 41. <answer>41</answer>"),
        ScriptedReply::new("Step 1: still 41. <answer>41</answer>"),
        ScriptedReply::new("Step 1: maybe 53? <answer>53</answer>"),
        ScriptedReply::new("Step 1: 17 * 3 = 51. <answer>51</answer>"),
        // "hard": CoT and all label rounds wrong, tree exploration finds it.
        ScriptedReply::new("Step 1: it is 13. <answer>13</answer>"),
        ScriptedReply::new("<answer>34</answer>"),
        ScriptedReply::new("<answer>34</answer>"),
        ScriptedReply::new("<answer>34</answer>"),
        // Tree beam (breadth 2): both children proposed, first one verifies.
        ScriptedReply::new("1,1,2,3,5,8,13,21 -> <answer>21</answer>"),
        ScriptedReply::new("counting off by one <answer>13</answer>"),
    ];

    let mock = MockProvider::new(script, 16, 0);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let session = Session::new(&mock, &prompts, ChatOptions::new("mock-model"), &ledger);

    let cfg = BuildConfig {
        tot_breadth: 2,
        tot_depth: 1,
        ..BuildConfig::default()
    };
    let mut store = MemoryStore::in_memory(16);
    let report = session.run_train(&problems, &mut store, &cfg, Some("warmup"));

    print!("{}", report.render_table());
    println!("per-problem outcomes:");
    for outcome in &report.outcomes {
        println!(
            "  {:<8} stage={:<14} attempts: cot={} label={} tot={}",
            outcome.problem_id,
            outcome.stage.name(),
            outcome.attempts.cot,
            outcome.attempts.label_guided,
            outcome.attempts.tot,
        );
    }
    println!("\nmemory now holds {} entries (every one verified)", store.len());
    Ok(())
}
