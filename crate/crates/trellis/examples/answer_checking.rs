//! Deterministic answer verification: extraction from model replies, math
//! normalization and equality, and sandboxed code-test execution.
//!
//! ```bash
//! cargo run -p trellis --example answer_checking
//! ```

use std::time::Duration;

use trellis::verifier::{extract_answer, math_equal, normalize_answer, run_code_tests};

fn main() -> anyhow::Result<()> {
    println!("answer extraction:");
    let replies = [
        "Step 1: compute. Step 2: conclude. <answer>42</answer>",
        "The final answer is: (3, π/2)",
        "<The final answer is: The polar coordinates are (3, π/2)>",
        "no marker at all",
    ];
    for reply in replies {
        println!("  {:?} -> {:?}", reply, extract_answer(reply));
    }

    println!("\nmath equality after normalization:");
    let pairs = [
        ("\\frac{1}{2}", "0.5"),
        ("(4, \\frac{4\\pi}{3}, -1)", "(4, 4π/3, −1)"),
        ("$\\boxed{1,234}$", "1234"),
        ("3", "3.0000001"),
        ("2^3", "8"), // deliberately conservative: no symbolic evaluation
    ];
    for (a, b) in pairs {
        println!(
            "  {:?} vs {:?}: {} (normalized: {:?} / {:?})",
            a,
            b,
            math_equal(a, b),
            normalize_answer(a),
            normalize_answer(b),
        );
    }

    println!("\nsandboxed code tests (python3 subprocess with timeout):");
    let source = "def add(a, b):\n    return a + b\n";
    let good = run_code_tests(source, &["assert add(2, 2) == 4".into()], Duration::from_secs(5));
    match good {
        Ok(report) => println!("  passing program: {:?}", report.status),
        Err(e) => {
            println!("  (skipping code checks: {e})");
            return Ok(());
        }
    }
    let bad = run_code_tests(source, &["assert add(2, 2) == 5".into()], Duration::from_secs(5))?;
    println!("  failing assertion: {:?}", bad.status);
    let hung = run_code_tests("while True:\n    pass\n", &[], Duration::from_secs(1))?;
    println!("  infinite loop with 1s budget: {:?}", hung.status);
    Ok(())
}
