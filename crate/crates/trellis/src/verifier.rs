//! Deterministic answer extraction and correctness checking.
//!
//! Math answers are compared after a conservative normalization pass; code
//! answers run against their test programs in an isolated subprocess with a
//! timeout. Normalization deliberately stops short of symbolic equivalence:
//! a false positive would poison the gold memory, a false negative only
//! costs one training sample.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Problem, TaskKind};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("math problem has no label to verify against")]
    MissingLabel,
    #[error("code problem has no tests to verify against")]
    MissingTests,
    #[error("interpreter {0} not found on this host")]
    InterpreterMissing(String),
    #[error("failed to spawn sandbox: {0}")]
    SandboxSpawn(String),
}

static ANSWER_SPAN_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?is)<answer>(.*?)</answer>").unwrap());
static FINAL_ANSWER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)the final answer is:?\s*(.*)").unwrap());

/// Pull the final answer out of a model reply.
///
/// Prefers the last `<answer>...</answer>` span; falls back to the tail of
/// the last line containing "The final answer is". Returns `None` when
/// neither marker appears.
pub fn extract_answer(text: &str) -> Option<String> {
    if let Some(caps) = ANSWER_SPAN_RE.captures_iter(text).last() {
        return Some(caps[1].trim().to_string());
    }
    for line in text.lines().rev() {
        if let Some(caps) = FINAL_ANSWER_RE.captures(line) {
            let mut tail = caps[1].trim().to_string();
            // Conclusion replies wrap the whole line in angle brackets.
            if line.trim_start().starts_with('<') && tail.ends_with('>') {
                tail.pop();
                tail = tail.trim_end().to_string();
            }
            if tail.is_empty() {
                return None;
            }
            return Some(tail);
        }
    }
    None
}

/// Strip thousands separators: a comma directly between a digit and a
/// three-digit group is removed, other commas are kept.
fn strip_number_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ',' {
            let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
            let next_three = chars[i + 1..].iter().take(3).filter(|c| c.is_ascii_digit()).count() == 3;
            let after = chars.get(i + 4).map(|c| c.is_ascii_digit()).unwrap_or(false);
            if prev_digit && next_three && !after {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Rewrite `\frac{a}{b}` (and `\dfrac`) to `a/b`, innermost first.
fn rewrite_fractions(s: &str) -> String {
    static FRAC_RE: Lazy<Regex> =
        Lazy::new(|| Regex::new(r"\\d?frac\{([^{}]*)\}\{([^{}]*)\}").unwrap());
    let mut text = s.to_string();
    for _ in 0..8 {
        let next = FRAC_RE.replace_all(&text, "$1/$2").into_owned();
        if next == text {
            break;
        }
        text = next;
    }
    text
}

/// Unwrap a whole-string `\boxed{...}`.
fn unwrap_boxed(s: &str) -> String {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("\\boxed{") {
        if let Some(inner) = rest.strip_suffix('}') {
            return inner.to_string();
        }
    }
    t.to_string()
}

/// Normalize one answer string into canonical comparison form.
pub fn normalize_answer(s: &str) -> String {
    let mut t = s.trim().to_string();
    // Unicode minus and common LaTeX symbol spellings.
    t = t.replace('\u{2212}', "-");
    t = t.trim_matches('$').trim().to_string();
    t = unwrap_boxed(&t);
    t = t.replace("\\left", "").replace("\\right", "");
    t = rewrite_fractions(&t);
    t = t.replace("\\pi", "π").replace("\\theta", "θ").replace("\\sqrt", "√");
    t = t.replace("\\(", "(").replace("\\)", ")");
    t = strip_number_commas(&t);
    t.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Parse a normalized answer as a real number; accepts plain decimals,
/// percent forms, and simple `a/b` fractions.
fn parse_numeric(s: &str) -> Option<f64> {
    static FRACTION_RE: Lazy<Regex> =
        Lazy::new(|| Regex::new(r"^\(?(-?\d+(?:\.\d+)?)/(-?\d+(?:\.\d+)?)\)?$").unwrap());
    let t = s.trim_start_matches('+');
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    if let Some(stripped) = t.strip_suffix('%') {
        if let Ok(v) = stripped.parse::<f64>() {
            return Some(v / 100.0);
        }
    }
    if let Some(caps) = FRACTION_RE.captures(t) {
        let num: f64 = caps[1].parse().ok()?;
        let den: f64 = caps[2].parse().ok()?;
        if den != 0.0 {
            return Some(num / den);
        }
    }
    None
}

/// Compare a candidate answer against the reference.
///
/// Both sides are normalized; when both parse as numbers they are compared
/// at 1e-6 relative tolerance, otherwise the normalized strings must match
/// case-insensitively.
pub fn math_equal(candidate: &str, reference: &str) -> bool {
    let c = normalize_answer(candidate);
    let r = normalize_answer(reference);
    if c.is_empty() || r.is_empty() {
        return false;
    }
    if let (Some(a), Some(b)) = (parse_numeric(&c), parse_numeric(&r)) {
        if a == b {
            return true;
        }
        return (a - b).abs() <= 1e-6 * a.abs().max(b.abs());
    }
    c.to_lowercase() == r.to_lowercase()
}

/// Outcome of running a candidate program against its tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Passed,
    Failed,
    TimedOut,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassFailReport {
    pub status: TestStatus,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    #[serde(skip)]
    pub duration: Duration,
}

impl PassFailReport {
    pub fn passed(&self) -> bool {
        self.status == TestStatus::Passed
    }
}

fn drain_pipe<R: Read + Send + 'static>(pipe: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = String::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_string(&mut buf);
        }
        buf
    })
}

/// Execute `source` with its test programs appended, in a subprocess with a
/// hard timeout. Generated code never runs in-process.
pub fn run_code_tests(
    source: &str,
    tests: &[String],
    timeout: Duration,
) -> Result<PassFailReport, VerifierError> {
    run_code_tests_with(source, tests, timeout, "python3")
}

/// Same as [`run_code_tests`] with an explicit interpreter binary.
pub fn run_code_tests_with(
    source: &str,
    tests: &[String],
    timeout: Duration,
    interpreter: &str,
) -> Result<PassFailReport, VerifierError> {
    let mut program = String::with_capacity(source.len() + 64);
    program.push_str(source);
    program.push_str("\n\n");
    for test in tests {
        program.push_str(test);
        program.push('\n');
    }

    static RUN_COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let dir = std::env::temp_dir();
    let file = dir.join(format!(
        "trellis_codetest_{}_{}.py",
        std::process::id(),
        RUN_COUNTER.fetch_add(1, std::sync::atomic::Ordering::SeqCst)
    ));
    std::fs::write(&file, &program).map_err(|e| VerifierError::SandboxSpawn(e.to_string()))?;

    let started = Instant::now();
    let spawn = Command::new(interpreter)
        .arg(&file)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match spawn {
        Ok(child) => child,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let _ = std::fs::remove_file(&file);
            return Err(VerifierError::InterpreterMissing(interpreter.to_string()));
        }
        Err(e) => {
            let _ = std::fs::remove_file(&file);
            return Err(VerifierError::SandboxSpawn(e.to_string()));
        }
    };

    let stdout_handle = drain_pipe(child.stdout.take());
    let stderr_handle = drain_pipe(child.stderr.take());

    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if started.elapsed() >= timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break None;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                let _ = child.kill();
                let _ = std::fs::remove_file(&file);
                return Err(VerifierError::SandboxSpawn(e.to_string()));
            }
        }
    };

    let stdout = stdout_handle.join().unwrap_or_default();
    let stderr = stderr_handle.join().unwrap_or_default();
    let _ = std::fs::remove_file(&file);

    let report = if timed_out {
        PassFailReport {
            status: TestStatus::TimedOut,
            exit_code: None,
            stdout,
            stderr,
            duration: started.elapsed(),
        }
    } else {
        let status = status.expect("status present when not timed out");
        PassFailReport {
            status: if status.success() {
                TestStatus::Passed
            } else {
                TestStatus::Failed
            },
            exit_code: status.code(),
            stdout,
            stderr,
            duration: started.elapsed(),
        }
    };
    Ok(report)
}

/// Check a final answer (math) or candidate program (code) against the
/// problem's ground truth.
pub fn verify(problem: &Problem, answer_or_code: &str) -> Result<bool, VerifierError> {
    verify_with_timeout(problem, answer_or_code, Duration::from_secs(10))
}

pub fn verify_with_timeout(
    problem: &Problem,
    answer_or_code: &str,
    code_timeout: Duration,
) -> Result<bool, VerifierError> {
    match problem.task_kind {
        TaskKind::Math => {
            let label = problem.label.as_deref().ok_or(VerifierError::MissingLabel)?;
            Ok(math_equal(answer_or_code, label))
        }
        TaskKind::Code => {
            if problem.code_tests.is_empty() {
                return Err(VerifierError::MissingTests);
            }
            let report = run_code_tests(answer_or_code, &problem.code_tests, code_timeout)?;
            Ok(report.passed())
        }
    }
}
