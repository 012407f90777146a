//! Append-only harvest journal: one JSON object per line, one line per
//! phase transition, giving crash-tolerant progress tracking and resume.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lifecycle phase of one record within a harvest run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    RecordFetched,
    MetadataExtracted,
    ImageSaved { filename: String },
    RecordComplete,
    RecordFailed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub record_id: u32,
    #[serde(flatten)]
    pub phase: Phase,
    /// ISO-8601 with seconds precision, UTC.
    pub timestamp: String,
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal line {line} is unparseable: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Single-writer append handle; every entry is flushed immediately.
pub struct JournalWriter {
    file: std::fs::File,
}

impl JournalWriter {
    pub fn open(path: &Path) -> Result<Self, JournalError> {
        Ok(Self {
            file: std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?,
        })
    }

    pub fn record(&mut self, record_id: u32, phase: Phase) -> Result<(), JournalError> {
        let entry = JournalEntry {
            record_id,
            phase,
            timestamp: chrono::Utc::now()
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut line = serde_json::to_string(&entry).expect("journal entries serialize");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// What the journal says about prior progress. `completed_ids` and the
/// keys of `partial` are disjoint by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarvestState {
    pub completed_ids: BTreeSet<u32>,
    /// Files already saved for records that never completed.
    pub partial: BTreeMap<u32, BTreeSet<String>>,
}

impl HarvestState {
    pub fn image_already_saved(&self, record_id: u32, filename: &str) -> bool {
        self.partial
            .get(&record_id)
            .is_some_and(|files| files.contains(filename))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayedJournal {
    pub state: HarvestState,
    /// True when a truncated trailing line (crash artifact) was skipped.
    pub ignored_truncated_tail: bool,
}

/// Rebuilds the harvest state from the journal. An absent file is an empty
/// state; a truncated final line is tolerated; anything unparseable before
/// that is corruption.
pub fn replay_journal(path: &Path) -> Result<ReplayedJournal, JournalError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(ReplayedJournal {
                state: HarvestState::default(),
                ignored_truncated_tail: false,
            })
        }
        Err(e) => return Err(e.into()),
    };

    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let mut state = HarvestState::default();
    let mut truncated = false;
    let last_index = lines.len().saturating_sub(1);
    for (position, (line_no, line)) in lines.iter().enumerate() {
        let entry: JournalEntry = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(e) => {
                if position == last_index {
                    truncated = true;
                    continue;
                }
                return Err(JournalError::Corrupt {
                    line: line_no + 1,
                    detail: e.to_string(),
                });
            }
        };
        apply(&mut state, &entry);
    }
    Ok(ReplayedJournal {
        state,
        ignored_truncated_tail: truncated,
    })
}

fn apply(state: &mut HarvestState, entry: &JournalEntry) {
    match &entry.phase {
        Phase::ImageSaved { filename } => {
            if !state.completed_ids.contains(&entry.record_id) {
                state
                    .partial
                    .entry(entry.record_id)
                    .or_default()
                    .insert(filename.clone());
            }
        }
        Phase::RecordComplete => {
            state.completed_ids.insert(entry.record_id);
            state.partial.remove(&entry.record_id);
        }
        Phase::RecordFetched | Phase::MetadataExtracted | Phase::RecordFailed { .. } => {}
    }
}
