//! UUID identity management: assign collision-safe v4 identifiers to
//! images, write UUID-named copies with the identity embedded in metadata,
//! and keep the original↔UUID mapping file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::imagemeta::{self, MetaError};

/// One image admitted to the collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAsset {
    pub original_filename: String,
    /// Numeric record id parsed from the filename prefix, when present.
    pub record_id: Option<u32>,
    pub view_code: Option<char>,
    pub uuid: Uuid,
    pub uuid_filename: String,
    pub width_px: u32,
    pub height_px: u32,
    /// SHA-256 of the original bytes, lowercase hex.
    pub content_hash: String,
    /// True when the identity lives in a `.id` sidecar because the container
    /// format could not carry it.
    pub sidecar_identity: bool,
}

/// One row of `uuid_mapping.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRow {
    pub original_filename: String,
    pub uuid_filename: String,
    pub record_id: Option<u32>,
}

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("no decodable image found in {0}")]
    EmptyCollection(PathBuf),
    #[error("original `{0}` maps to more than one UUID")]
    DuplicateOriginal(String),
    #[error("uuid filename `{0}` appears twice in the mapping")]
    DuplicateUuidFilename(String),
    #[error("mapping row {0} is malformed")]
    MalformedMapping(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// UUID v4 generator: OS randomness for production, a seeded stream for
/// reproducible tests.
#[derive(Debug)]
pub enum UuidSource {
    System,
    Seeded(ChaCha8Rng),
}

impl UuidSource {
    pub fn seeded(seed: u64) -> Self {
        UuidSource::Seeded(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_seed_opt(seed: Option<u64>) -> Self {
        match seed {
            Some(s) => Self::seeded(s),
            None => UuidSource::System,
        }
    }

    pub fn next_uuid(&mut self) -> Uuid {
        match self {
            UuidSource::System => Uuid::new_v4(),
            UuidSource::Seeded(rng) => {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                uuid::Builder::from_random_bytes(bytes).into_uuid()
            }
        }
    }
}

/// The original→UUID assignment table. Re-assigning a known original
/// returns its existing UUID; fresh assignments never collide with any UUID
/// already in the table.
#[derive(Debug)]
pub struct IdentityLedger {
    source: UuidSource,
    rows: IndexMap<String, MappingRow>,
    used: BTreeSet<Uuid>,
}

impl IdentityLedger {
    pub fn new(source: UuidSource) -> Self {
        Self {
            source,
            rows: IndexMap::new(),
            used: BTreeSet::new(),
        }
    }

    /// Loads prior assignments from an existing `uuid_mapping.csv`.
    pub fn load(path: &Path, source: UuidSource) -> Result<Self, IdentityError> {
        let mut ledger = Self::new(source);
        if !path.exists() {
            return Ok(ledger);
        }
        let mut reader = csv::Reader::from_path(path)?;
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let original = row.get(0).ok_or(IdentityError::MalformedMapping(i))?;
            let uuid_filename = row.get(1).ok_or(IdentityError::MalformedMapping(i))?;
            let record_id = row.get(2).and_then(|s| s.parse().ok());
            let uuid_text = uuid_filename.split('.').next().unwrap_or(uuid_filename);
            let uuid: Uuid = uuid_text
                .parse()
                .map_err(|_| IdentityError::MalformedMapping(i))?;
            ledger.insert_row(
                MappingRow {
                    original_filename: original.to_string(),
                    uuid_filename: uuid_filename.to_string(),
                    record_id,
                },
                uuid,
            )?;
        }
        Ok(ledger)
    }

    fn insert_row(&mut self, row: MappingRow, uuid: Uuid) -> Result<(), IdentityError> {
        if self.rows.contains_key(&row.original_filename) {
            return Err(IdentityError::DuplicateOriginal(row.original_filename));
        }
        if !self.used.insert(uuid) {
            return Err(IdentityError::DuplicateUuidFilename(row.uuid_filename));
        }
        self.rows.insert(row.original_filename.clone(), row);
        Ok(())
    }

    pub fn existing(&self, original_filename: &str) -> Option<&MappingRow> {
        self.rows.get(original_filename)
    }

    /// Returns the UUID for an original filename, minting a fresh one on
    /// first sight.
    pub fn assign(&mut self, original_filename: &str, record_id: Option<u32>) -> Uuid {
        if let Some(row) = self.rows.get(original_filename) {
            let text = row.uuid_filename.split('.').next().unwrap_or_default();
            return text.parse().expect("ledger rows hold valid uuids");
        }
        let uuid = loop {
            let candidate = self.source.next_uuid();
            if !self.used.contains(&candidate) {
                break candidate;
            }
        };
        let extension = original_filename
            .rsplit_once('.')
            .map(|(_, e)| e.to_ascii_lowercase());
        let uuid_filename = match extension {
            Some(ext) if !ext.is_empty() => format!("{uuid}.{ext}"),
            _ => uuid.to_string(),
        };
        self.used.insert(uuid);
        self.rows.insert(
            original_filename.to_string(),
            MappingRow {
                original_filename: original_filename.to_string(),
                uuid_filename,
                record_id,
            },
        );
        uuid
    }

    pub fn rows(&self) -> impl Iterator<Item = &MappingRow> {
        self.rows.values()
    }
}

/// Renders mapping rows as CSV text, sorted by original filename for
/// deterministic output.
pub fn render_mapping(rows: &[MappingRow]) -> Result<String, IdentityError> {
    let mut sorted: Vec<&MappingRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.original_filename.cmp(&b.original_filename));

    let mut seen_original: BTreeSet<&str> = BTreeSet::new();
    let mut seen_uuid: BTreeSet<&str> = BTreeSet::new();
    for row in &sorted {
        if !seen_original.insert(&row.original_filename) {
            return Err(IdentityError::DuplicateOriginal(
                row.original_filename.clone(),
            ));
        }
        if !seen_uuid.insert(&row.uuid_filename) {
            return Err(IdentityError::DuplicateUuidFilename(
                row.uuid_filename.clone(),
            ));
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["original_filename", "uuid_filename", "record_id"])?;
    for row in sorted {
        writer.write_record([
            row.original_filename.as_str(),
            row.uuid_filename.as_str(),
            &row.record_id.map(|id| id.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(writer.into_inner().expect("vec writer")).expect("csv is utf-8"))
}

/// Writes `uuid_mapping.csv` into the UUID images directory. The file is
/// left untouched when its content would not change.
pub fn write_mapping(rows: &[MappingRow], uuid_images_dir: &Path) -> Result<PathBuf, IdentityError> {
    let text = render_mapping(rows)?;
    let path = uuid_images_dir.join("uuid_mapping.csv");
    if std::fs::read_to_string(&path).map(|old| old == text).unwrap_or(false) {
        return Ok(path);
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

/// A file skipped by [`process_collection`], with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub filename: String,
    pub reason: String,
}

/// Outcome of processing one original-images directory.
#[derive(Debug)]
pub struct ProcessOutcome {
    pub assets: Vec<ImageAsset>,
    pub skipped: Vec<SkippedFile>,
    pub mapping_path: PathBuf,
}

fn record_id_from_filename(filename: &str) -> Option<u32> {
    let stem = filename.rsplit_once('.').map_or(filename, |(s, _)| s);
    let digits: String = stem.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        None
    } else {
        digits.parse().ok()
    }
}

/// Processes every image in `original_images_dir` in filename order:
/// decode, assign a UUID, embed the identity, and write the UUID-named copy
/// into `uuid_images_dir`. Originals are never modified. Files already in
/// the mapping with an existing copy are skipped wholesale, so re-running
/// is a no-op. The mapping file is written last.
pub fn process_collection(
    original_images_dir: &Path,
    uuid_images_dir: &Path,
    source: UuidSource,
) -> Result<ProcessOutcome, IdentityError> {
    std::fs::create_dir_all(uuid_images_dir)?;
    let mapping_path = uuid_images_dir.join("uuid_mapping.csv");
    let mut ledger = IdentityLedger::load(&mapping_path, source)?;

    let mut names: Vec<String> = std::fs::read_dir(original_images_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();

    let mut assets = Vec::new();
    let mut skipped = Vec::new();
    let mut processed_rows: Vec<MappingRow> = Vec::new();

    for name in &names {
        let path = original_images_dir.join(name);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                skipped.push(SkippedFile {
                    filename: name.clone(),
                    reason: format!("read failed: {e}"),
                });
                continue;
            }
        };
        let decoded = match image::load_from_memory(&bytes) {
            Ok(img) => img,
            Err(e) => {
                skipped.push(SkippedFile {
                    filename: name.clone(),
                    reason: format!("decode failed: {e}"),
                });
                continue;
            }
        };

        let record_id = record_id_from_filename(name);
        let already_mapped = ledger.existing(name).is_some();
        let uuid = ledger.assign(name, record_id);
        let row = ledger.existing(name).expect("just assigned").clone();
        let target = uuid_images_dir.join(&row.uuid_filename);

        let mut sidecar_identity = false;
        if already_mapped && target.exists() {
            // Prior run already produced this copy; leave it alone.
            sidecar_identity = target.with_extension("id").exists()
                || uuid_images_dir
                    .join(format!("{}.id", row.uuid_filename))
                    .exists();
        } else {
            match imagemeta::embed_uuid(&bytes, &uuid.to_string()) {
                Ok(tagged) => std::fs::write(&target, tagged)?,
                Err(MetaError::UnsupportedFormat) => {
                    std::fs::write(&target, &bytes)?;
                    std::fs::write(
                        uuid_images_dir.join(format!("{}.id", row.uuid_filename)),
                        format!("{uuid}\n"),
                    )?;
                    sidecar_identity = true;
                }
                Err(MetaError::Malformed(kind, detail)) => {
                    skipped.push(SkippedFile {
                        filename: name.clone(),
                        reason: format!("malformed {kind} container: {detail}"),
                    });
                    continue;
                }
            }
        }

        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        assets.push(ImageAsset {
            original_filename: name.clone(),
            record_id,
            view_code: crate::extract::classify_view(name),
            uuid,
            uuid_filename: row.uuid_filename.clone(),
            width_px: decoded.width(),
            height_px: decoded.height(),
            content_hash: format!("{:x}", hasher.finalize()),
            sidecar_identity,
        });
        processed_rows.push(row);
    }

    if assets.is_empty() {
        return Err(IdentityError::EmptyCollection(
            original_images_dir.to_path_buf(),
        ));
    }

    let mapping_path = write_mapping(&processed_rows, uuid_images_dir)?;
    Ok(ProcessOutcome {
        assets,
        skipped,
        mapping_path,
    })
}

/// Strict RFC-4122 v4 shape check used by tests and validation.
pub fn is_v4_uuid(text: &str) -> bool {
    let bytes = text.as_bytes();
    if bytes.len() != 36 {
        return false;
    }
    for (i, &b) in bytes.iter().enumerate() {
        match i {
            8 | 13 | 18 | 23 => {
                if b != b'-' {
                    return false;
                }
            }
            14 => {
                if b != b'4' {
                    return false;
                }
            }
            19 => {
                if !matches!(b, b'8' | b'9' | b'a' | b'b') {
                    return false;
                }
            }
            _ => {
                if !matches!(b, b'0'..=b'9' | b'a'..=b'f') {
                    return false;
                }
            }
        }
    }
    true
}
