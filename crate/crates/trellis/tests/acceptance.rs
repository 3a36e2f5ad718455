//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Everything runs offline against the scripted mock provider; the optional
//! live smoke test is `#[ignore]`d and only runs when an endpoint is
//! configured in the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trellis::bench::{EvalMode, Session};
use trellis::forest::{AggregationMode, ExecConfig, ForestExecutor, GuidelineMode};
use trellis::gold::BuildConfig;
use trellis::memory::{cosine_similarity, EntryDraft, MemoryStore};
use trellis::model::{Origin, Problem, ReasoningStep, Trajectory};
use trellis::prompts::{placeholder, PromptRegistry, TemplateId};
use trellis::provider::{ChatOptions, MockProvider, Provider, ScriptedReply, UsageLedger};
use trellis::report::utility;
use trellis::verifier::{math_equal, run_code_tests, verify, TestStatus};
use trellis::weighted_vote;

fn pass(criterion: u32, name: &str) {
    println!("[acceptance] criterion {criterion} ({name}): PASS");
}

// --- criterion 1: utility arithmetic -----------------------------------

#[test]
fn criterion_1_utility_arithmetic() {
    let rows = [
        ("ReAct", 67.74, 5400.0, 62.34),
        ("ToT", 75.81, 7200.0, 68.61),
        ("FoT", 83.87, 21800.0, 62.07),
        ("Ours", 85.48, 12600.0, 72.88),
    ];
    for (name, acc, mean_tokens, expected) in rows {
        let got = utility(acc, mean_tokens);
        assert!(
            (got - expected).abs() <= 0.01,
            "{name}: utility({acc}, {mean_tokens}) = {got}, expected {expected} ±0.01"
        );
    }
    pass(1, "utility arithmetic");
}

// --- criterion 2: retrieval oracle --------------------------------------

fn dummy_draft(i: usize, embedding: Vec<f32>) -> EntryDraft {
    let id = format!("p{i}");
    let problem = Problem::math(&id, format!("problem {i}"), "1").unwrap();
    let trajectory = Trajectory::new(
        &id,
        vec![ReasoningStep::new(1, "solve", Origin::Cot).unwrap()],
        "1",
    )
    .unwrap()
    .mark_verified();
    EntryDraft::new(problem, trajectory, embedding, Origin::Cot)
}

fn random_unit_query(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-3 {
            return v;
        }
    }
}

#[test]
fn criterion_2_retrieval_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2001);
    for case in 0..200 {
        let dim = rng.gen_range(8..=64usize);
        let n = rng.gen_range(0..=1000usize);
        let mut store = MemoryStore::in_memory(dim);
        let mut used: Vec<Vec<f32>> = Vec::new();
        for i in 0..n {
            // A quarter of entries reuse an earlier embedding to force ties.
            let embedding = if !used.is_empty() && rng.gen_bool(0.25) {
                used[rng.gen_range(0..used.len())].clone()
            } else {
                let v = random_unit_query(&mut rng, dim);
                used.push(v.clone());
                v
            };
            store.append(dummy_draft(i, embedding)).unwrap();
        }
        let query = random_unit_query(&mut rng, dim);
        let k = rng.gen_range(1..=n + 3);

        // Oracle: score everything, full stable sort, truncate.
        let mut oracle: Vec<(u64, f64)> = store
            .entries()
            .iter()
            .map(|e| {
                (
                    e.created_seq,
                    cosine_similarity(&query, &e.embedding).unwrap(),
                )
            })
            .collect();
        oracle.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.cmp(&b.0))
        });
        oracle.truncate(k);

        let got = store.retrieve_top_k(&query, k).unwrap();
        assert_eq!(got.len(), oracle.len(), "case {case}: result size");
        for (pos, ((entry, score), (oracle_seq, oracle_score))) in
            got.iter().zip(oracle.iter()).enumerate()
        {
            assert_eq!(
                entry.created_seq, *oracle_seq,
                "case {case} position {pos}: tie-break or ordering mismatch"
            );
            assert_eq!(score, oracle_score, "case {case} position {pos}: score");
        }
    }
    pass(2, "retrieval oracle, 200 randomized stores");
}

// --- criterion 3: gold-loop integrity ------------------------------------

fn wrong(n: u32) -> ScriptedReply {
    ScriptedReply::new(format!("Step 1: hmm. <answer>wrong-{n}</answer>"))
}

#[test]
fn criterion_3_gold_loop_integrity() {
    let problems = vec![
        Problem::math("p1", "what is 6*7?", "42").unwrap(),
        Problem::math("p2", "what is 5+5?", "10").unwrap(),
        Problem::math("p3", "what is 10-3?", "7").unwrap(),
        Problem::math("p4", "what is 24/2?", "12").unwrap(),
        Problem::math("p5", "what is 5*6?", "30").unwrap(),
        Problem::math("p6", "what is 97+2?", "99").unwrap(),
    ];
    let mut script: Vec<ScriptedReply> = Vec::new();
    // p1: cot correct immediately.
    script.push(ScriptedReply::new("Step 1: 6*7 = 42. <answer>42</answer>"));
    // p2: cot wrong, label-guided round 1 correct.
    script.push(wrong(1));
    script.push(ScriptedReply::new("Step 1: 5+5 = 10. <answer>10</answer>"));
    // p3: cot wrong, label rounds 1-2 wrong, round 3 correct.
    script.push(wrong(2));
    script.push(wrong(3));
    script.push(wrong(4));
    script.push(ScriptedReply::new("Step 1: 10-3 = 7. <answer>7</answer>"));
    // p4: cot wrong, 3 label rounds wrong, tree exploration finds it
    // (breadth 2: both proposals land before completion checks).
    script.push(wrong(5));
    script.push(wrong(6));
    script.push(wrong(7));
    script.push(wrong(8));
    script.push(ScriptedReply::new("half of 24 is 12 <answer>12</answer>"));
    script.push(ScriptedReply::new("some other branch <answer>13</answer>"));
    // p5: cot + labels wrong, tree dead (both complete and wrong), memory
    // stage: induction + guided generation correct.
    script.push(wrong(9));
    script.push(wrong(10));
    script.push(wrong(11));
    script.push(wrong(12));
    script.push(ScriptedReply::new("dead leaf <answer>1</answer>"));
    script.push(ScriptedReply::new("dead leaf <answer>2</answer>"));
    script.push(ScriptedReply::new(
        "Problem: arithmetic\n<step 1>: multiply carefully",
    ));
    script.push(ScriptedReply::new("Step 1: 5*6 = 30. <answer>30</answer>"));
    // p6: everything wrong, including the memory-guided attempt.
    script.push(wrong(13));
    script.push(wrong(14));
    script.push(wrong(15));
    script.push(wrong(16));
    script.push(ScriptedReply::new("dead leaf <answer>3</answer>"));
    script.push(ScriptedReply::new("dead leaf <answer>4</answer>"));
    script.push(ScriptedReply::new(
        "Problem: arithmetic\n<step 1>: add carefully",
    ));
    script.push(ScriptedReply::new("Step 1: nope. <answer>98</answer>"));

    let mock = MockProvider::new(script, 16, 11);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let session = Session::new(&mock, &prompts, ChatOptions::new("mock-model"), &ledger);
    let cfg = BuildConfig {
        label_guided_rounds: 3,
        tot_breadth: 2,
        tot_depth: 1,
        memory_fallback_enabled: true,
        retrieval_k: 3,
        llm_verifier: false,
    };

    let dir = tempfile::tempdir().unwrap();
    let store_dir = dir.path().join("store");
    let mut store = MemoryStore::create(&store_dir, 16).unwrap();
    let report = session.run_train(&problems, &mut store, &cfg, Some("arith"));

    // Store growth equals the number of successes.
    assert_eq!(report.succeeded, 5);
    assert_eq!(store.len(), 5);
    assert_eq!(mock.remaining_replies(), 0, "script fully consumed");

    // Every stage path exercised.
    assert_eq!(report.stage_histogram["cot"], 1);
    assert_eq!(report.stage_histogram["label_guided"], 2);
    assert_eq!(report.stage_histogram["tot"], 1);
    assert_eq!(report.stage_histogram["memory_guided"], 1);
    assert_eq!(report.stage_histogram["failed"], 1);
    assert_eq!(report.outcomes[2].attempts.label_guided, 3);

    // Per-stage cumulative success is monotone nondecreasing.
    let cumulative: Vec<u64> = report.cumulative.iter().map(|c| c.cumulative).collect();
    assert_eq!(cumulative, vec![1, 3, 4, 5]);
    assert!(cumulative.windows(2).all(|w| w[0] <= w[1]));

    // Outcome success matches per-problem store delta (0 or 1 each).
    let succeeded_ids: Vec<&str> = report
        .outcomes
        .iter()
        .filter(|o| o.succeeded)
        .map(|o| o.problem_id.as_str())
        .collect();
    assert_eq!(succeeded_ids, vec!["p1", "p2", "p3", "p4", "p5"]);

    // Reload from disk: every stored trajectory re-verifies.
    drop(store);
    let reopened = MemoryStore::open(&store_dir).unwrap();
    assert_eq!(reopened.len(), 5);
    for entry in reopened.entries() {
        assert!(entry.trajectory.verified);
        assert!(
            verify(&entry.problem, &entry.trajectory.final_answer).unwrap(),
            "stored trajectory for {} fails re-verification",
            entry.problem.id
        );
        assert_eq!(entry.tag.as_deref(), Some("arith"));
    }
    pass(3, "gold-loop integrity over every stage path");
}

// --- criteria 4 & 5: executor call accounting + shared-prefix coherence --

fn seeded_store(mock: &MockProvider) -> MemoryStore {
    let mut store = MemoryStore::in_memory(mock.embedding_dimension());
    for (i, text) in ["alpha problem", "beta problem", "gamma problem"]
        .iter()
        .enumerate()
    {
        let p = Problem::math(format!("seed{i}"), *text, "1").unwrap();
        let t = Trajectory::new(
            format!("seed{i}"),
            vec![ReasoningStep::new(1, "work it out", Origin::Cot).unwrap()],
            "1",
        )
        .unwrap()
        .mark_verified();
        let e = mock.embed(text).unwrap();
        store.append(EntryDraft::new(p, t, e, Origin::Cot)).unwrap();
    }
    store
}

fn guideline_script(m: usize, t: usize) -> Vec<ScriptedReply> {
    let steps = |label: &str| {
        (1..=t)
            .map(|i| format!("<step {i}>: {label} instruction {i}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut replies = vec![ScriptedReply::new(format!(
        "Problem: the core problem\n{}",
        steps("anchor")
    ))];
    for v in 1..m {
        replies.push(ScriptedReply::new(format!(
            "New Guideline:\n{}",
            steps(&format!("variant{v}"))
        )));
    }
    replies
}

/// Exact script for one forest run under the given knobs.
fn forest_script(m: usize, t: usize, refine: bool, mode: AggregationMode) -> Vec<ScriptedReply> {
    let mut replies = guideline_script(m, t);
    match mode {
        AggregationMode::Stepwise => {
            for step in 1..=t {
                for branch in 1..=m {
                    replies.push(ScriptedReply::new(format!("proposal b{branch} t{step}")));
                    if refine {
                        replies.push(ScriptedReply::new(format!("refined b{branch} t{step}")));
                    }
                }
                if m > 1 {
                    replies.push(ScriptedReply::new("answer 2 is the best"));
                }
            }
        }
        AggregationMode::Final => {
            for branch in 1..=m {
                for step in 1..=t {
                    replies.push(ScriptedReply::new(format!("proposal b{branch} t{step}")));
                    if refine {
                        replies.push(ScriptedReply::new(format!("refined b{branch} t{step}")));
                    }
                }
            }
            if m > 1 {
                replies.push(ScriptedReply::new("answer 2 is the best"));
            }
        }
    }
    replies.push(ScriptedReply::new("The final answer is: 42"));
    replies
}

/// Closed-form chat-call count for one run.
fn expected_calls(m: u64, t: u64, refine: bool, mode: AggregationMode) -> u64 {
    let induction = 1 + (m - 1);
    let proposals = m * t;
    let refines = if refine { m * t } else { 0 };
    let judges = if m > 1 {
        match mode {
            AggregationMode::Stepwise => t,
            AggregationMode::Final => 1,
        }
    } else {
        0
    };
    induction + proposals + refines + judges + 1
}

/// The prefix block a proposal prompt embeds.
fn extract_prefix_block(prompt: &str) -> &str {
    let start = prompt
        .find("Previous analysis: ")
        .expect("proposal prompt has a previous-analysis block")
        + "Previous analysis: ".len();
    let end = prompt
        .find("\n\nExecute the guideline: ")
        .expect("proposal prompt has an execution block");
    &prompt[start..end]
}

#[test]
fn criteria_4_and_5_call_accounting_and_prefix_coherence() {
    for m in [1usize, 3] {
        for t in [1usize, 3] {
            for refine in [true, false] {
                for mode in [AggregationMode::Stepwise, AggregationMode::Final] {
                    let mock = MockProvider::new(forest_script(m, t, refine, mode), 16, 5);
                    let prompts = PromptRegistry::builtin();
                    let ledger = UsageLedger::new();
                    let cfg = ExecConfig {
                        branches: m,
                        refinement_enabled: refine,
                        aggregation_mode: mode,
                        collaboration: None,
                        max_step_retries: 0,
                        retrieval_k: 3,
                        guideline_mode: GuidelineMode::Rewrite,
                        category_filter: None,
                    };
                    let executor = ForestExecutor::new(
                        &mock,
                        &prompts,
                        ChatOptions::new("mock-model"),
                        cfg,
                        &ledger,
                    );
                    let store = seeded_store(&mock);
                    let problem = Problem::math("g1", "grid problem", "42").unwrap();
                    let outcome = executor
                        .run_forest(&problem, &store)
                        .unwrap_or_else(|e| panic!("run (M={m},T={t},refine={refine},{mode:?}) failed: {e}"));

                    let label = format!("M={m} T={t} refine={refine} mode={mode:?}");
                    let want = expected_calls(m as u64, t as u64, refine, mode);
                    assert_eq!(
                        mock.calls_served() as u64,
                        want,
                        "{label}: total chat calls"
                    );
                    assert_eq!(mock.remaining_replies(), 0, "{label}: script fully used");

                    // Per-tag accounting matches each formula term.
                    let by_tag = ledger.by_tag();
                    let calls = |tag: &str| by_tag.get(tag).map(|t| t.calls).unwrap_or(0);
                    assert_eq!(calls("induce"), 1, "{label}: induce");
                    assert_eq!(calls("rewrite"), (m - 1) as u64, "{label}: rewrite");
                    assert_eq!(calls("propose"), (m * t) as u64, "{label}: propose");
                    assert_eq!(
                        calls("refine"),
                        if refine { (m * t) as u64 } else { 0 },
                        "{label}: refine"
                    );
                    let judge_want = if m > 1 {
                        match mode {
                            AggregationMode::Stepwise => t as u64,
                            AggregationMode::Final => 1,
                        }
                    } else {
                        0
                    };
                    assert_eq!(calls("aggregate"), judge_want, "{label}: judge");
                    assert_eq!(calls("conclude"), 1, "{label}: conclude");

                    assert_eq!(outcome.trace.steps.len(), t, "{label}: accepted steps");
                    assert_eq!(outcome.answer, "42", "{label}: answer");

                    // Criterion 5, stepwise runs: every proposal prompt for
                    // step t embeds the identical accepted prefix.
                    if mode == AggregationMode::Stepwise {
                        let proposal_prompts: Vec<String> = mock
                            .captured_requests()
                            .iter()
                            .map(|r| r.messages[0].content.clone())
                            .filter(|p| p.contains("Execute the guideline: "))
                            .collect();
                        assert_eq!(proposal_prompts.len(), m * t, "{label}: proposal count");
                        for (step_idx, chunk) in proposal_prompts.chunks(m).enumerate() {
                            let expected_prefix = if step_idx == 0 {
                                "None.".to_string()
                            } else {
                                outcome.trace.steps[..step_idx]
                                    .iter()
                                    .map(|s| format!("Step {}: {}", s.index, s.accepted.text))
                                    .collect::<Vec<_>>()
                                    .join("\n")
                            };
                            for prompt in chunk {
                                assert_eq!(
                                    extract_prefix_block(prompt),
                                    expected_prefix,
                                    "{label}: prefix at step {}",
                                    step_idx + 1
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    pass(4, "executor call accounting over the (M,T,refine,mode) grid");
    pass(5, "shared-prefix coherence in every stepwise run");
}

// --- criterion 6: weighted-vote properties --------------------------------

/// Independent oracle: explicit sums, explicit first-max scan.
fn vote_oracle(scores: &[Vec<f64>], weights: &[f64]) -> usize {
    let candidates = scores[0].len();
    let mut sums = vec![0.0f64; candidates];
    for (row, w) in scores.iter().zip(weights) {
        for (c, s) in row.iter().enumerate() {
            sums[c] += w * s;
        }
    }
    let mut best = 0;
    for c in 1..candidates {
        if sums[c] > sums[best] {
            best = c;
        }
    }
    best + 1
}

#[test]
fn criterion_6_weighted_vote_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_6001);
    for case in 0..1000 {
        let models = rng.gen_range(1..=4usize);
        let candidates = rng.gen_range(1..=5usize);
        let scores: Vec<Vec<f64>> = (0..models)
            .map(|_| (0..candidates).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..models).map(|_| rng.gen_range(0.01..2.0)).collect();

        let got = weighted_vote(&scores, &weights).unwrap();
        assert_eq!(got, vote_oracle(&scores, &weights), "case {case}: oracle");

        // Argmax invariance under positive scaling; powers of two keep
        // the float arithmetic exact.
        for c in [0.25f64, 2.0, 8.0] {
            let scaled_scores: Vec<Vec<f64>> = scores
                .iter()
                .map(|row| row.iter().map(|s| s * c).collect())
                .collect();
            assert_eq!(
                weighted_vote(&scaled_scores, &weights).unwrap(),
                got,
                "case {case}: score scaling by {c}"
            );
            let scaled_weights: Vec<f64> = weights.iter().map(|w| w * c).collect();
            assert_eq!(
                weighted_vote(&scores, &scaled_weights).unwrap(),
                got,
                "case {case}: weight scaling by {c}"
            );
        }
    }

    // Deterministic tie-break: equal columns resolve to the lowest index.
    let tied = vec![vec![0.4, 0.4, 0.2], vec![0.6, 0.6, 0.1]];
    assert_eq!(weighted_vote(&tied, &[1.0, 1.0]).unwrap(), 1);
    pass(6, "weighted-vote argmax, scaling invariance, tie-break, 1000-case oracle");
}

// --- criterion 7: prompt fidelity -----------------------------------------

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn fidelity_substitutions() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            placeholder::QUESTION,
            "Convert the point (0,3) in rectangular coordinates to polar coordinates.",
        ),
        (placeholder::GROUND_TRUTH, "(3, π/2)"),
        (
            placeholder::POSITIVE_SAMPLES,
            "Positive Sample 1:\nQuestion: Convert the point (1,1) to polar coordinates.\nSolution:\n<step> Compute r = √2 and θ = π/4.\n<The final answer is: (√2, π/4)>",
        ),
        (
            placeholder::CHAIN_OF_THOUGHT,
            "<step 1>: Identify the coordinate system.\n<step 2>: Apply the conversion formulas.\n<step 3>: Check angle ranges.",
        ),
        (
            placeholder::PREVIOUS_STEPS,
            "Step 1: Identified rectangular coordinates (0, 3).",
        ),
        (placeholder::CURRENT_GUIDELINE_STEP, "Apply the conversion formulas."),
        (
            placeholder::ANSWER_LIST,
            "Answer 1: r = 3, θ = π/2\nAnswer 2: r = 3, θ = 3π/2\nAnswer 3: r = -3, θ = π/2",
        ),
        (placeholder::CURRENT_STEP, "Apply the conversion formulas."),
        (placeholder::RESULT, "r = 3, θ = π/2"),
    ]
}

#[test]
fn criterion_7_prompt_fidelity() {
    let registry = PromptRegistry::builtin();
    let substitutions = fidelity_substitutions();
    let update = std::env::var("TRELLIS_UPDATE_GOLDEN").is_ok();
    for id in TemplateId::DEFAULT_SET {
        let rendered = registry.render(id, &substitutions);
        let path = golden_dir().join(format!("{}.golden.txt", id.name()));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &rendered).unwrap();
            continue;
        }
        let golden = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
        assert_eq!(
            rendered,
            golden,
            "template {} drifted from its golden file",
            id.name()
        );
        // No placeholder marker may survive substitution.
        for (marker, _) in &substitutions {
            assert!(
                !rendered.contains(marker),
                "template {} left marker {marker} unsubstituted",
                id.name()
            );
        }
    }
    if update {
        panic!("golden files regenerated; unset TRELLIS_UPDATE_GOLDEN and rerun");
    }
    pass(7, "prompt fidelity against golden files");
}

// --- criterion 8: determinism ----------------------------------------------

struct PipelineArtifacts {
    entries: Vec<u8>,
    embeddings: Vec<u8>,
    meta: Vec<u8>,
    traces: String,
    train_report: Vec<u8>,
    eval_report: Vec<u8>,
}

fn full_pipeline_script() -> Vec<ScriptedReply> {
    let mut script = Vec::new();
    // Train problem t1: cot correct.
    script.push(ScriptedReply::new("Step 1: 2+2 = 4. <answer>4</answer>"));
    // Train problem t2: cot wrong, label round 1 correct.
    script.push(ScriptedReply::new("Step 1: off by one. <answer>5</answer>"));
    script.push(ScriptedReply::new("Step 1: 3+3 = 6. <answer>6</answer>"));
    // Eval: two problems, M=3, T=1, refinement on, stepwise.
    for answer in ["4", "6"] {
        script.extend(guideline_script(3, 1));
        for branch in 1..=3 {
            script.push(ScriptedReply::new(format!("proposal b{branch}")));
            script.push(ScriptedReply::new(format!("refined b{branch}")));
        }
        script.push(ScriptedReply::new("answer 2 is the best"));
        script.push(ScriptedReply::new(format!("The final answer is: {answer}")));
    }
    script
}

fn run_pipeline(dir: &Path) -> PipelineArtifacts {
    let train_problems = vec![
        Problem::math("t1", "what is 2+2?", "4").unwrap(),
        Problem::math("t2", "what is 3+3?", "6").unwrap(),
    ];
    let eval_problems = vec![
        Problem::math("e1", "what is 2+2?", "4").unwrap(),
        Problem::math("e2", "what is 3+3?", "6").unwrap(),
    ];
    let mock = MockProvider::new(full_pipeline_script(), 16, 99);
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let session = Session::new(&mock, &prompts, ChatOptions::new("mock-model"), &ledger);

    let store_dir = dir.join("store");
    let mut store = MemoryStore::create(&store_dir, 16).unwrap();
    let train_cfg = BuildConfig {
        label_guided_rounds: 3,
        tot_breadth: 2,
        tot_depth: 1,
        memory_fallback_enabled: true,
        retrieval_k: 3,
        llm_verifier: false,
    };
    let train_report = session.run_train(&train_problems, &mut store, &train_cfg, None);
    assert_eq!(train_report.succeeded, 2);

    let eval_cfg = ExecConfig {
        branches: 3,
        retrieval_k: 2,
        ..ExecConfig::default()
    };
    let (eval_report, traces) =
        session.run_eval(&eval_problems, &store, &eval_cfg, EvalMode::Forest);
    assert_eq!(eval_report.correct, 2);
    assert_eq!(mock.remaining_replies(), 0);

    let mut train_bytes = Vec::new();
    train_report.write_jsonl(&mut train_bytes).unwrap();
    let mut eval_bytes = Vec::new();
    eval_report.write_jsonl(&mut eval_bytes).unwrap();

    PipelineArtifacts {
        entries: std::fs::read(store_dir.join("entries.jsonl")).unwrap(),
        embeddings: std::fs::read(store_dir.join("embeddings.bin")).unwrap(),
        meta: std::fs::read(store_dir.join("meta.json")).unwrap(),
        traces: serde_json::to_string_pretty(&traces).unwrap(),
        train_report: train_bytes,
        eval_report: eval_bytes,
    }
}

#[test]
fn criterion_8_pipeline_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_pipeline(dir_a.path());
    let b = run_pipeline(dir_b.path());
    assert_eq!(a.entries, b.entries, "store entry records differ");
    assert_eq!(a.embeddings, b.embeddings, "embedding sidecars differ");
    assert_eq!(a.meta, b.meta, "store metadata differs");
    assert_eq!(a.traces, b.traces, "traces differ");
    assert_eq!(a.train_report, b.train_report, "train reports differ");
    assert_eq!(a.eval_report, b.eval_report, "eval reports differ");
    pass(8, "byte-identical stores, traces, and reports across reruns");
}

// --- criterion 9: verifier corpus ------------------------------------------

const POSITIVE_PAIRS: &[(&str, &str)] = &[
    ("3", "3.0"),
    ("3.0", "3"),
    ("0.5", "\\frac{1}{2}"),
    ("\\frac{1}{2}", "1/2"),
    ("1/2", "0.5"),
    ("-4", "-4.0"),
    ("+7", "7"),
    ("1,234", "1234"),
    ("1,234,567", "1234567"),
    ("$18$", "18"),
    ("\\boxed{42}", "42"),
    ("$\\boxed{12}$", "12"),
    ("4\\pi/3", "4π/3"),
    ("\\frac{4\\pi}{3}", "4π/3"),
    ("(4, \\frac{4\\pi}{3}, -1)", "(4, 4π/3, −1)"),
    ("(3, \\frac{\\pi}{2})", "(3, π/2)"),
    ("π/2", "\\pi/2"),
    ("2π", "2\\pi"),
    ("0.3333333333", "1/3"),
    ("0.142857142857", "1/7"),
    ("100", "100.00001"),
    ("  42  ", "42"),
    ("Yes", "yes"),
    ("X=2", "x=2"),
    ("\\sqrt2", "√2"),
    ("(1, 2)", "(1,2)"),
    ("50%", "0.5"),
    ("75%", "0.75"),
    ("1e3", "1000"),
    ("-0", "0"),
    ("42.", "42"),
    ("0.70710678", "0.7071067811865476"),
    ("\\left(3, \\frac{\\pi}{2}\\right)", "(3, π/2)"),
    ("$-5$", "-5"),
    ("12,345.67", "12345.67"),
    ("−8", "-8"),
    ("3/4", "0.75"),
    ("-3/4", "-0.75"),
    ("(-1)", "(−1)"),
    ("THE ANSWER", "the answer"),
    ("\\frac{7}{9}", "7/9"),
    ("0.000001", "1e-6"),
    ("\\boxed{\\frac{1}{2}}", "0.5"),
    ("x = 2", "x=2"),
    ("(2,7π/4)", "(2, 7\\pi/4)"),
    ("240", "240.0000"),
    ("0", "0.0"),
    ("1,000", "1000"),
    ("98.6", "98.60"),
    ("abc", "ABC"),
];

const NEGATIVE_PAIRS: &[(&str, &str)] = &[
    ("3", "4"),
    ("0.5", "0.51"),
    ("1/2", "1/3"),
    ("(3, π/2)", "(3, 3π/2)"),
    ("42", "-42"),
    ("4π/3", "2π/3"),
    ("x=2", "x=3"),
    ("1,234", "1,235"),
    ("\\frac{1}{2}", "\\frac{1}{4}"),
    ("100", "100.1"),
    ("yes", "no"),
    ("(1,2)", "(2,1)"),
    ("π", "2π"),
    ("", "5"),
    ("5", ""),
    ("0.001", "0.0011"),
    ("√2", "√3"),
    ("-1", "1"),
    ("3.14159", "3.15"),
    ("1e3", "1e4"),
    ("12,34", "1234"),
    ("7/9", "0.7"),
    ("75%", "0.74"),
    ("abc", "abd"),
    ("(4, 4π/3, -1)", "(4, 4π/3, 1)"),
    ("2", "2.1"),
    ("10", "100"),
    ("0", "0.1"),
    ("1/7", "0.142"),
    ("\\boxed{42}", "41"),
    ("50", "50.5"),
    ("x+1", "x-1"),
    ("θ=π/2", "θ=π/3"),
    ("(3,π/2)", "[3,π/2]"),
    ("answer", "answers"),
    ("9.99", "9.9"),
    ("1000", "1001"),
    ("-0.5", "0.5"),
    ("2/3", "3/2"),
    ("0.9999", "1"),
    ("5!", "120"),
    ("2^3", "8"),
    ("x=1,y=2", "x=1,y=3"),
    ("π/4", "0.785"),
    ("II", "2"),
    ("1.5e2", "149"),
    ("", ""),
    ("12,345", "12,346"),
    ("31", "13"),
    ("(0,3)", "(3,0)"),
];

#[test]
fn criterion_9_verifier_corpus() {
    assert_eq!(POSITIVE_PAIRS.len(), 50);
    assert_eq!(NEGATIVE_PAIRS.len(), 50);
    for (candidate, reference) in POSITIVE_PAIRS {
        assert!(
            math_equal(candidate, reference),
            "expected equal: {candidate:?} vs {reference:?}"
        );
        assert!(
            math_equal(reference, candidate),
            "symmetry failed: {reference:?} vs {candidate:?}"
        );
    }
    for (candidate, reference) in NEGATIVE_PAIRS {
        assert!(
            !math_equal(candidate, reference),
            "false positive: {candidate:?} vs {reference:?}"
        );
    }

    // Code smoke programs: pass, fail, timeout.
    let source = "def f():\n    return 1\n";
    let passed = run_code_tests(source, &["assert f() == 1".into()], Duration::from_secs(5))
        .expect("python3 available");
    assert_eq!(passed.status, TestStatus::Passed);
    let failed = run_code_tests(source, &["assert f() == 2".into()], Duration::from_secs(5))
        .unwrap();
    assert_eq!(failed.status, TestStatus::Failed);
    let start = std::time::Instant::now();
    let timed_out = run_code_tests("while True:\n    pass\n", &[], Duration::from_secs(2)).unwrap();
    assert_eq!(timed_out.status, TestStatus::TimedOut);
    assert!(start.elapsed() < Duration::from_secs(4));
    pass(9, "verifier corpus: 50 positive, 50 negative, 3 code smokes");
}

// --- criterion 10: optional live smoke -------------------------------------

/// Requires TRELLIS_LIVE=1 plus a configured endpoint and key. Runs a
/// 5-problem mini-eval end to end and checks the report shape and caps.
#[test]
#[ignore = "requires a configured live endpoint (set TRELLIS_LIVE=1)"]
fn criterion_10_live_smoke() {
    if std::env::var("TRELLIS_LIVE").ok().as_deref() != Some("1") {
        println!("[acceptance] criterion 10 (live smoke): SKIPPED (TRELLIS_LIVE not set)");
        return;
    }
    let config = trellis::Config::default();
    let provider = config.build_provider().expect("provider configured");
    let prompts = PromptRegistry::builtin();
    let ledger = UsageLedger::new();
    let options = config.chat_options(trellis::TaskKind::Math);
    assert_eq!(options.max_output_tokens, 400);
    let session = Session::new(provider.as_ref(), &prompts, options, &ledger);

    let problems: Vec<Problem> = [
        ("l1", "What is 12 * 12?", "144"),
        ("l2", "What is 7 + 15?", "22"),
        ("l3", "What is 100 / 4?", "25"),
        ("l4", "What is 2^5?", "32"),
        ("l5", "What is 45 - 17?", "28"),
    ]
    .iter()
    .map(|(id, q, a)| Problem::math(*id, *q, *a).unwrap())
    .collect();

    let mut store = MemoryStore::in_memory(config.embedding_dimension());
    let train_report = session.run_train(
        &problems[..2],
        &mut store,
        &BuildConfig::default(),
        None,
    );
    assert!(train_report.total == 2);

    let (report, _) = session.run_eval(
        &problems[2..],
        &store,
        &ExecConfig::default(),
        EvalMode::Forest,
    );
    assert_eq!(report.total, 3);
    assert_eq!(report.records.len(), 3);
    pass(10, "live smoke");
}

// Keep BTreeMap import used even if future edits drop per-tag checks.
#[allow(dead_code)]
fn _type_check(_: &BTreeMap<String, trellis::provider::TagTotals>) {}
