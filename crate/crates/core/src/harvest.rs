//! Harvest orchestration: enumerate record ids, fetch pages and images
//! through the polite client, persist metadata and image bytes, journal
//! every phase, and rebuild the records CSV at the end of the sweep.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;
use url::Url;

use crate::client::{FetchStatus, PoliteClient};
use crate::config::RunConfig;
use crate::extract::{build_record_url, extract_record, RecordMetadata};
use crate::journal::{
    replay_journal, HarvestState, JournalError, JournalWriter, Phase,
};

pub const RECORDS_CSV_FILENAME: &str = "bifaces_records_online.csv";
pub const JOURNAL_FILENAME: &str = "harvest_journal.jsonl";
pub const SIDECAR_FILENAME: &str = "records_meta.jsonl";

/// Resolved output locations of one harvest. A relative images directory
/// from the config lands under the output directory.
#[derive(Debug, Clone)]
pub struct HarvestPaths {
    pub original_images_dir: PathBuf,
    pub journal: PathBuf,
    pub sidecar: PathBuf,
    pub csv: PathBuf,
}

impl HarvestPaths {
    pub fn new(out_dir: &Path, cfg: &RunConfig) -> Self {
        let original_images_dir = if cfg.original_images_dir.is_absolute() {
            cfg.original_images_dir.clone()
        } else {
            out_dir.join(&cfg.original_images_dir)
        };
        Self {
            original_images_dir,
            journal: out_dir.join(JOURNAL_FILENAME),
            sidecar: out_dir.join(SIDECAR_FILENAME),
            csv: out_dir.join(RECORDS_CSV_FILENAME),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarvestReport {
    pub records_ok: u32,
    pub records_failed: u32,
    pub images_saved: u32,
    /// True when the run stopped early via `stop_after_records`.
    pub interrupted: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct HarvestOptions {
    /// Keep journal, sidecar and already-saved images from prior runs.
    pub resume: bool,
    /// Stop after completing this many records this run (testing hook that
    /// simulates a killed process; the CSV is not written).
    pub stop_after_records: Option<u32>,
}

#[derive(Debug, Error)]
pub enum HarvestAbort {
    #[error("robots policy forbids the record path ({0}); nothing was fetched")]
    RobotsDenied(String),
    #[error("output location {0} is not writable: {1}")]
    OutputUnwritable(PathBuf, std::io::Error),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Ascending ids of the configured range not yet completed.
pub fn plan_ids(cfg: &RunConfig, state: &HarvestState) -> Vec<u32> {
    cfg.id_range
        .clone()
        .filter(|id| !state.completed_ids.contains(id))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Complete,
    Partial,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Complete => "complete",
            RecordStatus::Partial => "partial",
        }
    }
}

/// One CSV row: the record plus its harvest status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvRecord {
    pub meta: RecordMetadata,
    pub status: RecordStatus,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o failure writing {0}: {1}")]
    IoFailure(PathBuf, std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

/// Writes the records table: header is `record_id`, `description`, the
/// union of all field labels in first-seen order, then `status`. Missing
/// values render empty; quoting is RFC-4180 (the csv crate's default).
pub fn write_records_csv(records: &[CsvRecord], path: &Path) -> Result<(), CsvError> {
    let mut labels: Vec<String> = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for rec in records {
        for label in rec.meta.fields.keys() {
            if seen.insert(label) {
                labels.push(label.clone());
            }
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["record_id".to_string(), "description".to_string()];
    header.extend(labels.iter().cloned());
    header.push("status".to_string());
    writer.write_record(&header)?;

    for rec in records {
        let mut row = vec![rec.meta.record_id.to_string(), rec.meta.description.clone()];
        for label in &labels {
            row.push(rec.meta.fields.get(label).cloned().unwrap_or_default());
        }
        row.push(rec.status.as_str().to_string());
        writer.write_record(&row)?;
    }

    let bytes = writer.into_inner().expect("vec writer");
    std::fs::write(path, bytes).map_err(|e| CsvError::IoFailure(path.to_path_buf(), e))
}

/// Reads a records CSV produced by [`write_records_csv`] back into metadata
/// keyed by record id (used by the processing stage for enrichment).
pub fn read_records_csv(
    path: &Path,
) -> Result<std::collections::BTreeMap<u32, RecordMetadata>, CsvError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(str::to_string)
        .collect();
    let mut out = std::collections::BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let Some(id) = row.get(0).and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        let description = row.get(1).unwrap_or_default().to_string();
        let mut fields = IndexMap::new();
        for (i, label) in header.iter().enumerate().skip(2) {
            if label == "status" {
                continue;
            }
            fields.insert(label.clone(), row.get(i).unwrap_or_default().to_string());
        }
        out.insert(
            id,
            RecordMetadata {
                record_id: id,
                description,
                fields,
            },
        );
    }
    Ok(out)
}

/// Appends one metadata row to the sidecar store (JSON lines, last write
/// per record wins on replay).
fn append_sidecar(path: &Path, meta: &RecordMetadata) -> std::io::Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut line = serde_json::to_string(meta).expect("metadata serializes");
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.flush()
}

fn load_sidecar(path: &Path) -> std::io::Result<IndexMap<u32, RecordMetadata>> {
    let mut out = IndexMap::new();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(meta) = serde_json::from_str::<RecordMetadata>(line) {
            out.insert(meta.record_id, meta);
        }
    }
    Ok(out)
}

/// Runs the harvest sweep. Per-record failures are journaled and skipped;
/// the run aborts only when robots forbids the record path or the output
/// location is unwritable. After the sweep the records CSV is rebuilt from
/// the sidecar store, covering records from prior runs as well.
pub fn run_harvest(
    cfg: &RunConfig,
    client: &mut PoliteClient,
    out_dir: &Path,
    options: &HarvestOptions,
) -> Result<HarvestReport, HarvestAbort> {
    let paths = HarvestPaths::new(out_dir, cfg);
    std::fs::create_dir_all(&paths.original_images_dir)
        .map_err(|e| HarvestAbort::OutputUnwritable(paths.original_images_dir.clone(), e))?;

    if !options.resume {
        for stale in [&paths.journal, &paths.sidecar] {
            if stale.exists() {
                std::fs::remove_file(stale)?;
            }
        }
    }

    let replay = replay_journal(&paths.journal)?;
    let mut report = HarvestReport::default();
    if replay.ignored_truncated_tail {
        report
            .warnings
            .push("journal had a truncated trailing line (ignored)".to_string());
    }

    // Robots gate: the record path must be fetchable before anything runs.
    let probe_url = build_record_url(&cfg.base_record_url_template, *cfg.id_range.start());
    if !client.url_allowed(&probe_url) {
        return Err(HarvestAbort::RobotsDenied(probe_url));
    }

    let mut journal = JournalWriter::open(&paths.journal)?;
    let mut metadata_store = load_sidecar(&paths.sidecar)?;
    let mut completed: BTreeSet<u32> = replay.state.completed_ids.clone();

    let plan = plan_ids(cfg, &replay.state);
    let mut completed_this_run = 0u32;

    for &record_id in &plan {
        if let Some(limit) = options.stop_after_records {
            if completed_this_run >= limit {
                report.interrupted = true;
                break;
            }
        }

        let page_url = build_record_url(&cfg.base_record_url_template, record_id);
        let outcome = client.fetch(&page_url);
        let bytes = match outcome.status {
            FetchStatus::Ok { bytes, .. } => bytes,
            other => {
                journal.record(
                    record_id,
                    Phase::RecordFailed {
                        reason: format!("page fetch failed: {other:?}"),
                    },
                )?;
                report.records_failed += 1;
                continue;
            }
        };
        journal.record(record_id, Phase::RecordFetched)?;

        let html = String::from_utf8_lossy(&bytes);
        let extracted = match extract_record(&html, record_id, &cfg.selectors) {
            Ok(e) => e,
            Err(e) => {
                journal.record(
                    record_id,
                    Phase::RecordFailed {
                        reason: format!("extraction failed: {e}"),
                    },
                )?;
                report.records_failed += 1;
                continue;
            }
        };
        journal.record(record_id, Phase::MetadataExtracted)?;
        append_sidecar(&paths.sidecar, &extracted.metadata)?;
        metadata_store.insert(record_id, extracted.metadata.clone());
        if extracted.unexpected_image_count {
            report.warnings.push(format!(
                "record {record_id} lists {} images instead of {}",
                extracted.images.len(),
                crate::extract::EXPECTED_VIEWS_PER_RECORD
            ));
        }

        let mut record_ok = true;
        for link in &extracted.images {
            let filename = &link.original_filename;
            let target = paths.original_images_dir.join(filename);
            if replay.state.image_already_saved(record_id, filename) && target.exists() {
                continue;
            }
            let image_url = match Url::parse(&page_url).and_then(|u| u.join(&link.full_url)) {
                Ok(u) => u.to_string(),
                Err(e) => {
                    journal.record(
                        record_id,
                        Phase::RecordFailed {
                            reason: format!("bad image url `{}`: {e}", link.full_url),
                        },
                    )?;
                    record_ok = false;
                    break;
                }
            };
            match client.fetch(&image_url).status {
                FetchStatus::Ok { bytes, .. } => {
                    // Bytes stored exactly as received; derived products
                    // come from the processing stage.
                    std::fs::write(&target, &bytes)
                        .map_err(|e| HarvestAbort::OutputUnwritable(target.clone(), e))?;
                    journal.record(
                        record_id,
                        Phase::ImageSaved {
                            filename: filename.clone(),
                        },
                    )?;
                    report.images_saved += 1;
                }
                other => {
                    journal.record(
                        record_id,
                        Phase::RecordFailed {
                            reason: format!("image `{filename}` fetch failed: {other:?}"),
                        },
                    )?;
                    record_ok = false;
                    break;
                }
            }
        }

        if record_ok {
            journal.record(record_id, Phase::RecordComplete)?;
            completed.insert(record_id);
            report.records_ok += 1;
            completed_this_run += 1;
        } else {
            report.records_failed += 1;
        }
    }

    if !report.interrupted {
        let mut rows: Vec<CsvRecord> = metadata_store
            .values()
            .map(|meta| CsvRecord {
                status: if completed.contains(&meta.record_id) {
                    RecordStatus::Complete
                } else {
                    RecordStatus::Partial
                },
                meta: meta.clone(),
            })
            .collect();
        rows.sort_by_key(|r| r.meta.record_id);
        write_records_csv(&rows, &paths.csv)
            .map_err(|e| HarvestAbort::OutputUnwritable(paths.csv.clone(), std::io::Error::other(e)))?;
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PartialConfig;

    fn cfg_with_range(start: u32, end: u32) -> RunConfig {
        PartialConfig {
            id_start: Some(start),
            id_end: Some(end),
            ..Default::default()
        }
        .into_config()
        .unwrap()
    }

    fn meta(id: u32, pairs: &[(&str, &str)]) -> RecordMetadata {
        let mut fields = IndexMap::new();
        for (k, v) in pairs {
            fields.insert(k.to_string(), v.to_string());
        }
        RecordMetadata {
            record_id: id,
            description: format!("DESCRIPTION {id}"),
            fields,
        }
    }

    #[test]
    fn plan_skips_completed_ids() {
        let cfg = cfg_with_range(1, 5);
        let mut state = HarvestState::default();
        state.completed_ids.insert(2);
        state.completed_ids.insert(4);
        assert_eq!(plan_ids(&cfg, &state), vec![1, 3, 5]);
    }

    #[test]
    fn plan_is_identity_on_fresh_state() {
        let cfg = cfg_with_range(1, 3);
        assert_eq!(plan_ids(&cfg, &HarvestState::default()), vec![1, 2, 3]);
    }

    #[test]
    fn plan_is_empty_when_everything_is_done() {
        let cfg = cfg_with_range(1, 3556);
        let mut state = HarvestState::default();
        state.completed_ids.extend(1..=3556);
        assert!(plan_ids(&cfg, &state).is_empty());
    }

    #[test]
    fn csv_contains_the_record_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let rows = vec![CsvRecord {
            meta: meta(
                190,
                &[
                    ("Sitename", "WARREN HILL"),
                    ("Country", "ENGLAND"),
                    ("Continent", "EUROPE"),
                    ("Biface type", "HANDAXE"),
                    ("Museum accession number", "123"),
                    ("Museum accession date", ""),
                ],
            ),
            status: RecordStatus::Complete,
        }];
        write_records_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "record_id,description,Sitename,Country,Continent,Biface type,Museum accession number,Museum accession date,status"
        );
        assert_eq!(
            lines.next().unwrap(),
            "190,DESCRIPTION 190,WARREN HILL,ENGLAND,EUROPE,HANDAXE,123,,complete"
        );
    }

    #[test]
    fn csv_header_is_the_first_seen_union_and_rows_blank_fill() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let rows = vec![
            CsvRecord {
                meta: meta(1, &[("Alpha", "A1"), ("Beta", "B1")]),
                status: RecordStatus::Complete,
            },
            CsvRecord {
                meta: meta(2, &[("Gamma", "G2")]),
                status: RecordStatus::Partial,
            },
        ];
        write_records_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "record_id,description,Alpha,Beta,Gamma,status");
        assert_eq!(lines[1], "1,DESCRIPTION 1,A1,B1,,complete");
        assert_eq!(lines[2], "2,DESCRIPTION 2,,,G2,partial");
    }

    #[test]
    fn comma_values_are_quoted_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let museum = "BRITISH MUSEUM, LONDON, ENGLAND";
        let rows = vec![CsvRecord {
            meta: meta(5, &[("Museum or holder", museum)]),
            status: RecordStatus::Complete,
        }];
        write_records_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"BRITISH MUSEUM, LONDON, ENGLAND\""));

        let parsed = read_records_csv(&path).unwrap();
        assert_eq!(parsed[&5].fields["Museum or holder"], museum);
        assert_eq!(parsed[&5].description, "DESCRIPTION 5");
    }

    #[test]
    fn sidecar_replays_with_last_write_winning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records_meta.jsonl");
        append_sidecar(&path, &meta(1, &[("A", "old")])).unwrap();
        append_sidecar(&path, &meta(2, &[("A", "two")])).unwrap();
        append_sidecar(&path, &meta(1, &[("A", "new")])).unwrap();
        let store = load_sidecar(&path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store[&1].fields["A"], "new");
    }
}
