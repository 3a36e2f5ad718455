//! Token-usage accounting and the accuracy-cost utility metric
//! (accuracy minus mean-tokens-per-problem / 1000).
//!
//! ```bash
//! cargo run -p trellis --example token_accounting
//! ```

use trellis::model::TokenUsage;
use trellis::provider::UsageLedger;
use trellis::report::utility;

fn main() {
    let ledger = UsageLedger::new();
    ledger.record("propose", &TokenUsage::new(320, 60));
    ledger.record("propose", &TokenUsage::new(340, 75));
    ledger.record("propose", &TokenUsage::new(310, 58));
    ledger.record("refine", &TokenUsage::new(400, 90));
    ledger.record("aggregate", &TokenUsage::new(500, 12));
    ledger.record("conclude", &TokenUsage::new(450, 40));

    println!("per-stage subtotals:");
    for (tag, totals) in ledger.by_tag() {
        println!(
            "  {tag:<10} {} calls  {:>5} prompt  {:>4} completion",
            totals.calls, totals.prompt_tokens, totals.completion_tokens
        );
    }
    let grand = ledger.totals();
    println!(
        "grand total: {} calls, {} tokens (always equals the sum of subtotals)",
        grand.calls,
        grand.total()
    );

    // The utility trades accuracy against decoding cost: one accuracy point
    // per thousand mean tokens per problem.
    println!("\naccuracy-cost utility on a number-theory subset:");
    println!("{:<8} {:>10} {:>9} {:>10}", "method", "tokens", "acc (%)", "utility");
    for (method, mean_tokens, acc) in [
        ("react", 5_400.0, 67.74),
        ("tot", 7_200.0, 75.81),
        ("fot", 21_800.0, 83.87),
        ("forest", 12_600.0, 85.48),
    ] {
        println!(
            "{method:<8} {mean_tokens:>10.0} {acc:>9.2} {:>10.2}",
            utility(acc, mean_tokens)
        );
    }
    println!("\nthe multi-branch run costs more than a single path but wins on");
    println!("the trade-off; an unbounded forest of trees does not.");
}
