//! Benchmark dataset ingestion (JSONL).

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::model::Problem;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    FileNotFound(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
}

/// Which record layout a dataset file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSchema {
    /// `{id?, question, answer}` records.
    MathJsonl,
    /// `{id?, prompt, tests}` records; `tests` is a string or list of strings.
    CodeJsonl,
}

impl std::str::FromStr for DatasetSchema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "math" | "math_jsonl" => Ok(DatasetSchema::MathJsonl),
            "code" | "code_jsonl" => Ok(DatasetSchema::CodeJsonl),
            other => Err(format!("unknown dataset schema: {other}")),
        }
    }
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Load a JSONL dataset. Missing ids are synthesized from line numbers;
/// malformed lines are rejected with line-numbered diagnostics. A leading
/// BOM and blank lines are tolerated.
pub fn load_dataset(path: &Path, schema: DatasetSchema) -> Result<Vec<Problem>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.display().to_string()));
    }
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = raw.strip_prefix('\u{feff}').unwrap_or(&raw);

    let mut problems = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema_err = |message: String| DatasetError::Schema {
            path: path.display().to_string(),
            line: lineno + 1,
            message,
        };
        let record: Value = serde_json::from_str(line).map_err(|e| schema_err(e.to_string()))?;
        let obj = record
            .as_object()
            .ok_or_else(|| schema_err("record is not a JSON object".into()))?;
        let id = obj
            .get("id")
            .and_then(value_to_string)
            .unwrap_or_else(|| (lineno + 1).to_string());

        let problem = match schema {
            DatasetSchema::MathJsonl => {
                let question = obj
                    .get("question")
                    .and_then(value_to_string)
                    .ok_or_else(|| schema_err("missing field \"question\"".into()))?;
                let answer = obj
                    .get("answer")
                    .and_then(value_to_string)
                    .ok_or_else(|| schema_err("missing field \"answer\"".into()))?;
                Problem::math(id, question, answer)
                    .map_err(|e| schema_err(e.to_string()))?
            }
            DatasetSchema::CodeJsonl => {
                let prompt = obj
                    .get("prompt")
                    .and_then(value_to_string)
                    .ok_or_else(|| schema_err("missing field \"prompt\"".into()))?;
                let tests = match obj.get("tests") {
                    Some(Value::String(s)) => vec![s.clone()],
                    Some(Value::Array(items)) => {
                        let mut tests = Vec::with_capacity(items.len());
                        for item in items {
                            tests.push(value_to_string(item).ok_or_else(|| {
                                schema_err("\"tests\" entries must be strings".into())
                            })?);
                        }
                        tests
                    }
                    Some(_) => {
                        return Err(schema_err(
                            "\"tests\" must be a string or list of strings".into(),
                        ))
                    }
                    None => return Err(schema_err("missing field \"tests\"".into())),
                };
                if tests.is_empty() {
                    return Err(schema_err("\"tests\" must not be empty".into()));
                }
                Problem::code(id, prompt, tests).map_err(|e| schema_err(e.to_string()))?
            }
        };
        problems.push(problem);
    }
    Ok(problems)
}
