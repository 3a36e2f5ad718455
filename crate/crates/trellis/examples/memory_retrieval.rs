//! Build a small experience memory and retrieve the most similar entries by
//! cosine similarity, including the tie-break rule.
//!
//! ```bash
//! cargo run -p trellis --example memory_retrieval
//! ```

use trellis::memory::{EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::provider::{MockProvider, Provider};

fn gold_entry(id: &str, statement: &str, answer: &str, mock: &MockProvider) -> EntryDraft {
    let problem = Problem::math(id, statement, answer).unwrap();
    let trajectory = Trajectory::new(
        id,
        vec![ReasoningStep::new(1, format!("solve: {statement}"), Origin::Cot).unwrap()],
        answer,
    )
    .unwrap()
    .mark_verified();
    let embedding = mock.embed(statement).unwrap();
    EntryDraft::new(problem, trajectory, embedding, Origin::Cot)
}

fn main() -> anyhow::Result<()> {
    // The mock embedder is a pure function of (text, seed): no network, and
    // the same text always lands on the same unit vector.
    let mock = MockProvider::new(Vec::new(), 32, 42);
    let mut store = MemoryStore::in_memory(32);

    let corpus = [
        ("m1", "Convert the point (1, 1) to polar coordinates.", "(√2, π/4)"),
        ("m2", "Convert (-2, -2√3, -1) to cylindrical coordinates.", "(4, 4π/3, -1)"),
        ("m3", "Find the derivative of x^3 at x = 2.", "12"),
        ("m4", "Convert the point (0, -5) to polar coordinates.", "(5, 3π/2)"),
        ("m5", "How many primes are below 20?", "8"),
    ];
    for (id, statement, answer) in corpus {
        store.append(gold_entry(id, statement, answer, &mock))?;
    }
    println!("store holds {} verified trajectories", store.len());

    let query_text = "Convert the point (0, 3) to polar coordinates.";
    let query = mock.embed(query_text)?;
    println!("\nquery: {query_text}");
    println!("top-3 most similar experiences:");
    for (entry, score) in store.retrieve_top_k(&query, 3)? {
        println!("  {:.4}  [{}] {}", score, entry.entry_id, entry.problem.statement);
    }

    // Identical embeddings tie; the earlier insertion wins.
    let mut tied = MemoryStore::in_memory(32);
    let shared = mock.embed("identical text")?;
    for id in ["first", "second"] {
        let mut draft = gold_entry(id, "identical text", "1", &mock);
        draft.embedding = shared.clone();
        tied.append(draft)?;
    }
    let hits = tied.retrieve_top_k(&shared, 2)?;
    println!(
        "\ntie-break: both entries score {:.4}, '{}' is returned first",
        hits[0].1, hits[0].0.problem.id
    );
    Ok(())
}
