//! Token-usage accounting across a run.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::TokenUsage;

/// Prompt/completion subtotals for one call tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TagTotals {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Synchronized accumulator of per-call token usage.
///
/// Keeps the raw call log so that aggregate totals can always be re-derived;
/// recorders may run concurrently, updates serialize through one lock.
#[derive(Debug, Default)]
pub struct UsageLedger {
    records: Mutex<Vec<TokenUsage>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one call's usage under the given pipeline-stage tag.
    pub fn record(&self, tag: &str, usage: &TokenUsage) {
        let mut records = self.records.lock().unwrap();
        records.push(usage.clone().tagged(tag));
    }

    /// The raw call log, in recording order.
    pub fn records(&self) -> Vec<TokenUsage> {
        self.records.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> u64 {
        self.records.lock().unwrap().len() as u64
    }

    /// Grand totals over every recorded call.
    pub fn totals(&self) -> TagTotals {
        let records = self.records.lock().unwrap();
        let mut out = TagTotals::default();
        for r in records.iter() {
            out.calls += 1;
            out.prompt_tokens += r.prompt_tokens;
            out.completion_tokens += r.completion_tokens;
        }
        out
    }

    /// Subtotals grouped by call tag, in deterministic tag order.
    pub fn by_tag(&self) -> BTreeMap<String, TagTotals> {
        let records = self.records.lock().unwrap();
        let mut out: BTreeMap<String, TagTotals> = BTreeMap::new();
        for r in records.iter() {
            let entry = out.entry(r.call_tag.clone()).or_default();
            entry.calls += 1;
            entry.prompt_tokens += r.prompt_tokens;
            entry.completion_tokens += r.completion_tokens;
        }
        out
    }

    /// Move every record out of this ledger into `other`.
    pub fn drain_into(&self, other: &UsageLedger) {
        let mut mine = self.records.lock().unwrap();
        let mut theirs = other.records.lock().unwrap();
        theirs.append(&mut mine);
    }
}
