//! Record-page extraction: one page of HTML in, structured metadata plus
//! full-size image links out. Parsing is tree-based and keyed on
//! configurable selectors rather than exact markup, so attribute order and
//! whitespace never matter.

use indexmap::IndexMap;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExtractorSelectors;

/// The collection convention: three photographs per artifact.
pub const EXPECTED_VIEWS_PER_RECORD: usize = 3;

/// One artifact's record: id, free-text description, and the label→value
/// details table in page order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub record_id: u32,
    pub description: String,
    pub fields: IndexMap<String, String>,
}

/// One full-size image reference found on a record page. URLs are kept as
/// written in the page; the harvester resolves them against the page URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageLink {
    pub record_id: u32,
    /// Single-letter view code inferred from the filename, when it follows
    /// the `<record_id><view>.<ext>` convention.
    pub view_code: Option<char>,
    pub thumbnail_url: Option<String>,
    pub full_url: String,
    pub original_filename: String,
}

/// Extraction result: metadata, image links, and a warning flag when the
/// image count deviates from the three-views convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedRecord {
    pub metadata: RecordMetadata,
    pub images: Vec<ImageLink>,
    pub unexpected_image_count: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("page has no details table; not a record page")]
    NotARecordPage,
    #[error("page displays record number {found}, expected {expected}")]
    IdMismatch { expected: u32, found: u32 },
    #[error("invalid selector `{0}`")]
    BadSelector(String),
}

/// Substitutes the id into a record URL template. The template is expected
/// to satisfy the run-config invariant (exactly one `{id}`).
pub fn build_record_url(template: &str, id: u32) -> String {
    template.replacen("{id}", &id.to_string(), 1)
}

/// Infers the view code from an image filename: strip extension and numeric
/// prefix; exactly one remaining character is the code.
pub fn classify_view(filename: &str) -> Option<char> {
    let stem = filename.rsplit_once('.').map_or(filename, |(s, _)| s);
    let rest = stem.trim_start_matches(|c: char| c.is_ascii_digit());
    if rest.len() == stem.len() {
        return None; // no numeric prefix
    }
    let mut chars = rest.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some(c.to_ascii_lowercase()),
        _ => None,
    }
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_selector(raw: &str) -> Result<Selector, ExtractError> {
    Selector::parse(raw).map_err(|_| ExtractError::BadSelector(raw.to_string()))
}

fn last_path_segment(url: &str) -> String {
    let no_fragment = url.split('#').next().unwrap_or(url);
    let no_query = no_fragment.split('?').next().unwrap_or(no_fragment);
    no_query
        .rsplit('/')
        .next()
        .unwrap_or(no_query)
        .to_string()
}

/// Parses one record page. The displayed record number (when present) must
/// agree with `record_id`; the details table must exist.
pub fn extract_record(
    html: &str,
    record_id: u32,
    selectors: &ExtractorSelectors,
) -> Result<ExtractedRecord, ExtractError> {
    let doc = Html::parse_document(html);

    let title_sel = parse_selector(&selectors.record_title)?;
    let desc_sel = parse_selector(&selectors.description)?;
    let rows_sel = parse_selector(&selectors.details_rows)?;
    let anchors_sel = parse_selector(&selectors.image_anchors)?;
    let cell_sel = parse_selector("td, th")?;
    let img_sel = parse_selector("img")?;

    // Cross-check the displayed record number when the title is present.
    if let Some(title) = doc.select(&title_sel).next() {
        let text = collapse_ws(&title.text().collect::<String>());
        if let Some(found) = trailing_number(&text) {
            if found != record_id {
                return Err(ExtractError::IdMismatch {
                    expected: record_id,
                    found,
                });
            }
        }
    }

    let mut fields: IndexMap<String, String> = IndexMap::new();
    let mut saw_rows = false;
    for row in doc.select(&rows_sel) {
        saw_rows = true;
        let cells: Vec<String> = row
            .select(&cell_sel)
            .map(|c| collapse_ws(&c.text().collect::<String>()))
            .collect();
        if cells.is_empty() {
            continue;
        }
        let label = cells[0].clone();
        if label.is_empty() {
            continue;
        }
        let value = cells.get(1).cloned().unwrap_or_default();
        // Duplicate labels keep the first occurrence (document order).
        fields.entry(label).or_insert(value);
    }
    if !saw_rows {
        return Err(ExtractError::NotARecordPage);
    }

    let description = doc
        .select(&desc_sel)
        .next()
        .map(|d| collapse_ws(&d.text().collect::<String>()))
        .unwrap_or_default();

    let mut images = Vec::new();
    for anchor in doc.select(&anchors_sel) {
        let Some(href) = anchor.value().attr("href") else {
            continue;
        };
        let thumbnail_url = anchor
            .select(&img_sel)
            .next()
            .and_then(|img| img.value().attr("src"))
            .map(str::to_string);
        let original_filename = last_path_segment(href);
        images.push(ImageLink {
            record_id,
            view_code: classify_view(&original_filename),
            thumbnail_url,
            full_url: href.to_string(),
            original_filename,
        });
    }

    Ok(ExtractedRecord {
        unexpected_image_count: images.len() != EXPECTED_VIEWS_PER_RECORD,
        metadata: RecordMetadata {
            record_id,
            description,
            fields,
        },
        images,
    })
}

/// Last run of ASCII digits in the text, e.g. "Full Record - No. 190" → 190.
fn trailing_number(text: &str) -> Option<u32> {
    let bytes = text.as_bytes();
    let end = bytes.iter().rposition(|b| b.is_ascii_digit())? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |i| i + 1);
    text[start..end].parse().ok()
}
