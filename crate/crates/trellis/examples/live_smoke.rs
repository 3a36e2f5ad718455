//! Five-problem mini-eval against a live OpenAI-compatible endpoint.
//!
//! Requires credentials; nothing runs without them:
//!
//! ```bash
//! export OPENAI_API_KEY=sk-...
//! # optionally: export TRELLIS_ENDPOINT=https://your-gateway/v1
//! cargo run -p trellis --example live_smoke
//! ```

use trellis::bench::{EvalMode, Session};
use trellis::config::Config;
use trellis::forest::ExecConfig;
use trellis::gold::BuildConfig;
use trellis::memory::MemoryStore;
use trellis::model::{Problem, TaskKind};
use trellis::prompts::PromptRegistry;
use trellis::provider::UsageLedger;

fn main() -> anyhow::Result<()> {
    let mut config = Config::default();
    if let Ok(endpoint) = std::env::var("TRELLIS_ENDPOINT") {
        config.provider.endpoint = endpoint;
    }
    if std::env::var("OPENAI_API_KEY").is_err() {
        eprintln!("OPENAI_API_KEY is not set; nothing to do.");
        return Ok(());
    }
    let provider = config.build_provider()?;
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let options = config.chat_options(TaskKind::Math);
    println!(
        "endpoint {} model {} (output cap {} tokens)",
        config.provider.endpoint, options.model_id, options.max_output_tokens
    );
    let session = Session::new(provider.as_ref(), &prompts, options, &ledger);

    let problems: Vec<Problem> = [
        ("l1", "What is 12 * 12?", "144"),
        ("l2", "What is 7 + 15?", "22"),
        ("l3", "What is 100 / 4?", "25"),
        ("l4", "A train travels 60 miles per hour for 2.5 hours. How far does it go?", "150"),
        ("l5", "What is the remainder when 17 is divided by 5?", "2"),
    ]
    .iter()
    .map(|(id, q, a)| Problem::math(*id, *q, *a).unwrap())
    .collect();

    // Seed the memory from the first two problems, then evaluate the rest.
    let mut store = MemoryStore::in_memory(config.embedding_dimension());
    println!("\ntraining on {} problems...", 2);
    let train = session.run_train(&problems[..2], &mut store, &BuildConfig::default(), None);
    print!("{}", train.render_table());

    println!("\nevaluating {} problems...", problems.len() - 2);
    let (report, _) = session.run_eval(&problems[2..], &store, &ExecConfig::default(), EvalMode::Forest);
    print!("{}", report.render_table());

    let totals = ledger.totals();
    println!(
        "\nspent {} chat calls, {} prompt + {} completion tokens",
        totals.calls, totals.prompt_tokens, totals.completion_tokens
    );
    Ok(())
}
