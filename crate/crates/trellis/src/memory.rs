//! Append-only repository of verified reasoning experience with exact
//! cosine top-k retrieval.
//!
//! On-disk layout is a directory holding `meta.json` (store dimension),
//! `entries.jsonl` (one record per entry, human-inspectable), and
//! `embeddings.bin` (packed little-endian f32 vectors indexed by
//! `created_seq`). The embedding bytes are written and synced before the
//! entry line, so a visible line always has its vector.
//!
//! Retrieval is a brute-force scan: stores hold hundreds of entries at the
//! scale this crate targets, and exactness keeps the ordering contract
//! testable against a sort oracle.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MemoryEntry, Origin, Problem, Trajectory};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("embedding dimension mismatch: store is {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity undefined for zero-norm vector")]
    ZeroNorm,
    #[error("only verified trajectories may enter memory")]
    UnverifiedTrajectory,
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt store record at {path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("store metadata invalid: {0}")]
    BadMetadata(String),
}

/// Cosine similarity a·b / (‖a‖‖b‖), computed in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, MemoryError> {
    if a.len() != b.len() {
        return Err(MemoryError::LengthMismatch(a.len(), b.len()));
    }
    let mut dot = 0f64;
    let mut norm_a = 0f64;
    let mut norm_b = 0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(MemoryError::ZeroNorm);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Pre-persistence form of a memory entry; the store assigns id and seq.
#[derive(Debug, Clone)]
pub struct EntryDraft {
    pub problem: Problem,
    pub trajectory: Trajectory,
    pub embedding: Vec<f32>,
    pub stage: Origin,
    pub tag: Option<String>,
}

impl EntryDraft {
    pub fn new(
        problem: Problem,
        trajectory: Trajectory,
        embedding: Vec<f32>,
        stage: Origin,
    ) -> Self {
        Self {
            problem,
            trajectory,
            embedding,
            stage,
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: Option<String>) -> Self {
        self.tag = tag;
        self
    }
}

#[derive(Serialize, Deserialize)]
struct StoreMeta {
    dimension: usize,
}

enum Backing {
    Disk {
        dir: PathBuf,
        entries_file: File,
        embeddings_file: File,
    },
    InMemory,
}

/// The experience repository: append-only, single writer, deterministic
/// retrieval order.
pub struct MemoryStore {
    dimension: usize,
    entries: Vec<MemoryEntry>,
    backing: Backing,
}

impl MemoryStore {
    /// Create a fresh store directory. Fails if it already holds a store.
    pub fn create(dir: &Path, dimension: usize) -> Result<Self, MemoryError> {
        if dimension == 0 {
            return Err(MemoryError::BadMetadata("dimension must be >= 1".into()));
        }
        std::fs::create_dir_all(dir)?;
        let meta_path = dir.join("meta.json");
        if meta_path.exists() {
            return Err(MemoryError::BadMetadata(format!(
                "store already exists at {}",
                dir.display()
            )));
        }
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&StoreMeta { dimension }).unwrap(),
        )?;
        let entries_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("entries.jsonl"))?;
        let embeddings_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("embeddings.bin"))?;
        Ok(Self {
            dimension,
            entries: Vec::new(),
            backing: Backing::Disk {
                dir: dir.to_path_buf(),
                entries_file,
                embeddings_file,
            },
        })
    }

    /// Open an existing store, validating every record on the way in.
    pub fn open(dir: &Path) -> Result<Self, MemoryError> {
        let meta_path = dir.join("meta.json");
        let meta_text = std::fs::read_to_string(&meta_path)?;
        let meta: StoreMeta = serde_json::from_str(&meta_text)
            .map_err(|e| MemoryError::BadMetadata(e.to_string()))?;
        if meta.dimension == 0 {
            return Err(MemoryError::BadMetadata("dimension must be >= 1".into()));
        }

        let entries_path = dir.join("entries.jsonl");
        let embeddings_path = dir.join("embeddings.bin");
        let mut entries = Vec::new();
        let reader = BufReader::new(File::open(&entries_path)?);
        let mut embeddings = File::open(&embeddings_path)?;
        let vector_bytes = meta.dimension * 4;

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| MemoryError::Corrupt {
                path: entries_path.display().to_string(),
                line: lineno + 1,
                message,
            };
            let raw: SerializedEntry =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if raw.created_seq != entries.len() as u64 {
                return Err(corrupt(format!(
                    "created_seq {} out of order, expected {}",
                    raw.created_seq,
                    entries.len()
                )));
            }
            let mut buf = vec![0u8; vector_bytes];
            embeddings
                .seek(SeekFrom::Start(raw.created_seq * vector_bytes as u64))
                .map_err(|e| corrupt(format!("embedding seek failed: {e}")))?;
            embeddings
                .read_exact(&mut buf)
                .map_err(|e| corrupt(format!("embedding missing: {e}")))?;
            let entry = MemoryEntry {
                entry_id: raw.entry_id,
                problem: raw.problem,
                trajectory: raw.trajectory,
                embedding: buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
                stage: raw.stage,
                created_seq: raw.created_seq,
                tag: raw.tag,
            };
            entry
                .validate()
                .map_err(|e| corrupt(format!("invariant violation: {e}")))?;
            entries.push(entry);
        }

        let entries_file = OpenOptions::new().append(true).open(&entries_path)?;
        let embeddings_file = OpenOptions::new().append(true).open(&embeddings_path)?;
        Ok(Self {
            dimension: meta.dimension,
            entries,
            backing: Backing::Disk {
                dir: dir.to_path_buf(),
                entries_file,
                embeddings_file,
            },
        })
    }

    /// Open the store at `dir`, creating it when absent.
    pub fn open_or_create(dir: &Path, dimension: usize) -> Result<Self, MemoryError> {
        if dir.join("meta.json").exists() {
            let store = Self::open(dir)?;
            if store.dimension != dimension {
                return Err(MemoryError::DimensionMismatch {
                    expected: store.dimension,
                    got: dimension,
                });
            }
            Ok(store)
        } else {
            Self::create(dir, dimension)
        }
    }

    /// Store without persistence, for tests and exploratory runs.
    pub fn in_memory(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
            backing: Backing::InMemory,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backing {
            Backing::Disk { dir, .. } => Some(dir),
            Backing::InMemory => None,
        }
    }

    /// Append a verified entry; persists durably before returning the
    /// assigned entry id.
    pub fn append(&mut self, draft: EntryDraft) -> Result<String, MemoryError> {
        if !draft.trajectory.verified {
            return Err(MemoryError::UnverifiedTrajectory);
        }
        if draft.embedding.len() != self.dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension,
                got: draft.embedding.len(),
            });
        }
        let created_seq = self.entries.len() as u64;
        let entry = MemoryEntry {
            entry_id: format!("e{created_seq:06}"),
            problem: draft.problem,
            trajectory: draft.trajectory,
            embedding: draft.embedding,
            stage: draft.stage,
            created_seq,
            tag: draft.tag,
        };

        if let Backing::Disk {
            entries_file,
            embeddings_file,
            ..
        } = &mut self.backing
        {
            // Vector first, then the line: a visible line implies its vector
            // is already on disk.
            let mut bytes = Vec::with_capacity(entry.embedding.len() * 4);
            for v in &entry.embedding {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            embeddings_file.write_all(&bytes)?;
            embeddings_file.sync_data()?;

            let mut record = serde_json::to_string(&SerializedEntry::from(&entry)).unwrap();
            record.push('\n');
            entries_file.write_all(record.as_bytes())?;
            entries_file.sync_data()?;
        }

        let id = entry.entry_id.clone();
        self.entries.push(entry);
        Ok(id)
    }

    /// Exact top-k by cosine similarity: scores descending, ties broken by
    /// earlier insertion. Returns `min(k, len)` results.
    pub fn retrieve_top_k(
        &self,
        query: &[f32],
        k: usize,
    ) -> Result<Vec<(&MemoryEntry, f64)>, MemoryError> {
        self.retrieve_top_k_filtered(query, k, None)
    }

    /// Top-k restricted to entries carrying the given tag.
    pub fn retrieve_top_k_filtered(
        &self,
        query: &[f32],
        k: usize,
        tag: Option<&str>,
    ) -> Result<Vec<(&MemoryEntry, f64)>, MemoryError> {
        if query.len() != self.dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        let mut scored: Vec<(&MemoryEntry, f64)> = Vec::new();
        for entry in &self.entries {
            if let Some(tag) = tag {
                if entry.tag.as_deref() != Some(tag) {
                    continue;
                }
            }
            let score = cosine_similarity(query, &entry.embedding)?;
            scored.push((entry, score));
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.created_seq.cmp(&b.0.created_seq))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

/// Disk form of an entry: the vector lives in the sidecar, not the JSON line.
#[derive(Serialize, Deserialize)]
struct SerializedEntry {
    entry_id: String,
    problem: Problem,
    trajectory: Trajectory,
    stage: Origin,
    created_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

impl From<&MemoryEntry> for SerializedEntry {
    fn from(e: &MemoryEntry) -> Self {
        Self {
            entry_id: e.entry_id.clone(),
            problem: e.problem.clone(),
            trajectory: e.trajectory.clone(),
            stage: e.stage,
            created_seq: e.created_seq,
            tag: e.tag.clone(),
        }
    }
}
