//! COCO annotation document: construction from pipeline outputs, canonical
//! serialization, and validation.
//!
//! Serialization is hand-rolled so the output is byte-deterministic: fixed
//! key order (`info`, `licenses`, `images`, `annotations`, `categories`, and
//! fixed member orders inside each), floats limited to two decimal places
//! for bbox/area and one for polygon coordinates, trailing zeros trimmed.
//! `serialize(parse(serialize(doc)))` reproduces the exact bytes.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;
use uuid::Uuid;

use crate::extract::RecordMetadata;
use crate::identity::ImageAsset;
use crate::manifest::DatasetInfo;
use crate::segment::SegmentationResult;

pub const CATEGORY_ID: u32 = 1;
pub const CATEGORY_NAME: &str = "object";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoInfo {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub year: i32,
    #[serde(default)]
    pub contributor: String,
    #[serde(default)]
    pub date_created: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoLicense {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub url: String,
}

/// Record-level enrichment carried on each image under the `archaeology`
/// key. Annotations stay strictly standard COCO so existing tooling works.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
pub struct ArchaeologyBlock {
    #[serde(default)]
    pub record_id: Option<u32>,
    #[serde(default)]
    pub view_code: Option<String>,
    #[serde(default)]
    pub original_filename: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub fields: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoImage {
    pub id: u32,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub archaeology: ArchaeologyBlock,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoAnnotation {
    pub id: u32,
    pub image_id: u32,
    pub category_id: u32,
    /// One flat `[x1, y1, ..., xn, yn]` polygon.
    pub segmentation: Vec<Vec<f64>>,
    pub area: f64,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    #[serde(default)]
    pub supercategory: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CocoDocument {
    pub info: CocoInfo,
    #[serde(default)]
    pub licenses: Vec<CocoLicense>,
    #[serde(default)]
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CocoError {
    #[error("duplicate file name `{0}`")]
    DuplicateFileName(String),
    #[error("asset {0} has neither a segmentation result nor an exclusion flag")]
    ResultMissing(Uuid),
}

/// Segmentation outcome attached to one asset.
#[derive(Debug, Clone)]
pub enum SegOutcome {
    Segmented(SegmentationResult),
    /// Thresholding found nothing; the image appears without annotation.
    ExcludedEmpty,
}

/// Builds the document: images sorted by file name with ids `1..n` in that
/// order, annotations `1..m` aligned with image order. Assets excluded as
/// empty appear as images without annotations. Returns warnings for assets
/// whose record metadata is missing.
pub fn build_document(
    info: &DatasetInfo,
    assets: &[ImageAsset],
    records: &BTreeMap<u32, RecordMetadata>,
    results: &BTreeMap<Uuid, SegOutcome>,
) -> Result<(CocoDocument, Vec<String>), CocoError> {
    let mut sorted: Vec<&ImageAsset> = assets.iter().collect();
    sorted.sort_by(|a, b| a.uuid_filename.cmp(&b.uuid_filename));

    let mut seen = BTreeSet::new();
    for asset in &sorted {
        if !seen.insert(asset.uuid_filename.as_str()) {
            return Err(CocoError::DuplicateFileName(asset.uuid_filename.clone()));
        }
    }

    let mut warnings = Vec::new();
    let mut images = Vec::with_capacity(sorted.len());
    let mut annotations = Vec::new();

    for (index, asset) in sorted.iter().enumerate() {
        let image_id = index as u32 + 1;
        let record = asset.record_id.and_then(|id| records.get(&id));
        if record.is_none() {
            warnings.push(format!(
                "no record metadata for `{}`; archaeology block is minimal",
                asset.original_filename
            ));
        }
        let archaeology = ArchaeologyBlock {
            record_id: asset.record_id,
            view_code: asset.view_code.map(|c| c.to_string()),
            original_filename: asset.original_filename.clone(),
            description: record.map(|r| r.description.clone()),
            fields: record.map(|r| r.fields.clone()).unwrap_or_default(),
        };
        images.push(CocoImage {
            id: image_id,
            file_name: asset.uuid_filename.clone(),
            width: asset.width_px,
            height: asset.height_px,
            archaeology,
        });

        match results.get(&asset.uuid) {
            Some(SegOutcome::Segmented(result)) => {
                let mut flat = Vec::with_capacity(result.contour.points.len() * 2);
                for p in &result.contour.points {
                    flat.push(f64::from(p.x));
                    flat.push(f64::from(p.y));
                }
                annotations.push(CocoAnnotation {
                    id: annotations.len() as u32 + 1,
                    image_id,
                    category_id: CATEGORY_ID,
                    segmentation: vec![flat],
                    area: result.area_px as f64,
                    bbox: [
                        f64::from(result.bbox.x),
                        f64::from(result.bbox.y),
                        f64::from(result.bbox.w),
                        f64::from(result.bbox.h),
                    ],
                    iscrowd: 0,
                });
            }
            Some(SegOutcome::ExcludedEmpty) => {}
            None => return Err(CocoError::ResultMissing(asset.uuid)),
        }
    }

    Ok((
        CocoDocument {
            info: CocoInfo {
                description: info.description.clone(),
                url: info.url.clone(),
                version: info.version.clone(),
                year: info.year,
                contributor: info.contributor.clone(),
                date_created: info.date_created.clone(),
            },
            licenses: info
                .licenses
                .iter()
                .map(|l| CocoLicense {
                    id: l.id,
                    name: l.name.clone(),
                    url: l.url.clone(),
                })
                .collect(),
            images,
            annotations,
            categories: vec![CocoCategory {
                id: CATEGORY_ID,
                name: CATEGORY_NAME.into(),
                supercategory: CATEGORY_NAME.into(),
            }],
        },
        warnings,
    ))
}

// ------------------------------------------------------------ serialize ----

fn escape_json(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Canonical number rendering: round to at most `max_dp` decimals, trim
/// trailing zeros, never emit `-0`.
fn fmt_num(v: f64, max_dp: usize) -> String {
    let scale = 10f64.powi(max_dp as i32);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        return "0".to_string();
    }
    let mut s = format!("{r:.max_dp$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

struct Emitter {
    out: String,
    depth: usize,
}

impl Emitter {
    fn new() -> Self {
        Self {
            out: String::new(),
            depth: 0,
        }
    }

    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
    }

    fn line_open(&mut self, text: &str) {
        self.indent();
        self.out.push_str(text);
        self.out.push('\n');
        self.depth += 1;
    }

    fn line_close(&mut self, text: &str, trailing_comma: bool) {
        self.depth -= 1;
        self.indent();
        self.out.push_str(text);
        if trailing_comma {
            self.out.push(',');
        }
        self.out.push('\n');
    }

    fn field_str(&mut self, key: &str, value: &str, comma: bool) {
        self.indent();
        escape_json(key, &mut self.out);
        self.out.push_str(": ");
        escape_json(value, &mut self.out);
        if comma {
            self.out.push(',');
        }
        self.out.push('\n');
    }

    fn field_raw(&mut self, key: &str, value: &str, comma: bool) {
        self.indent();
        escape_json(key, &mut self.out);
        self.out.push_str(": ");
        self.out.push_str(value);
        if comma {
            self.out.push(',');
        }
        self.out.push('\n');
    }
}

/// Canonical serialization of the document; see the module docs for the
/// formatting contract.
pub fn serialize(doc: &CocoDocument) -> String {
    let mut e = Emitter::new();
    e.line_open("{");

    // info
    e.line_open("\"info\": {");
    e.field_str("description", &doc.info.description, true);
    e.field_str("url", &doc.info.url, true);
    e.field_str("version", &doc.info.version, true);
    e.field_raw("year", &doc.info.year.to_string(), true);
    e.field_str("contributor", &doc.info.contributor, true);
    e.field_str("date_created", &doc.info.date_created, false);
    e.line_close("},", false);

    // licenses
    if doc.licenses.is_empty() {
        e.indent();
        e.out.push_str("\"licenses\": [],\n");
    } else {
        e.line_open("\"licenses\": [");
        let n = doc.licenses.len();
        for (i, lic) in doc.licenses.iter().enumerate() {
            e.line_open("{");
            e.field_raw("id", &lic.id.to_string(), true);
            e.field_str("name", &lic.name, true);
            e.field_str("url", &lic.url, false);
            e.line_close("}", i + 1 < n);
        }
        e.line_close("],", false);
    }

    // images
    if doc.images.is_empty() {
        e.indent();
        e.out.push_str("\"images\": [],\n");
    } else {
        e.line_open("\"images\": [");
        let n = doc.images.len();
        for (i, img) in doc.images.iter().enumerate() {
            e.line_open("{");
            e.field_raw("id", &img.id.to_string(), true);
            e.field_str("file_name", &img.file_name, true);
            e.field_raw("width", &img.width.to_string(), true);
            e.field_raw("height", &img.height.to_string(), true);
            e.line_open("\"archaeology\": {");
            let a = &img.archaeology;
            match a.record_id {
                Some(id) => e.field_raw("record_id", &id.to_string(), true),
                None => e.field_raw("record_id", "null", true),
            }
            match &a.view_code {
                Some(v) => e.field_str("view_code", v, true),
                None => e.field_raw("view_code", "null", true),
            }
            e.field_str("original_filename", &a.original_filename, true);
            match &a.description {
                Some(d) => e.field_str("description", d, true),
                None => e.field_raw("description", "null", true),
            }
            if a.fields.is_empty() {
                e.indent();
                e.out.push_str("\"fields\": {}\n");
            } else {
                e.line_open("\"fields\": {");
                let m = a.fields.len();
                for (j, (k, v)) in a.fields.iter().enumerate() {
                    e.field_str(k, v, j + 1 < m);
                }
                e.line_close("}", false);
            }
            e.line_close("}", false);
            e.line_close("}", i + 1 < n);
        }
        e.line_close("],", false);
    }

    // annotations
    if doc.annotations.is_empty() {
        e.indent();
        e.out.push_str("\"annotations\": [],\n");
    } else {
        e.line_open("\"annotations\": [");
        let n = doc.annotations.len();
        for (i, ann) in doc.annotations.iter().enumerate() {
            e.line_open("{");
            e.field_raw("id", &ann.id.to_string(), true);
            e.field_raw("image_id", &ann.image_id.to_string(), true);
            e.field_raw("category_id", &ann.category_id.to_string(), true);
            let polys: Vec<String> = ann
                .segmentation
                .iter()
                .map(|poly| {
                    let coords: Vec<String> =
                        poly.iter().map(|&v| fmt_num(v, 1)).collect();
                    format!("[{}]", coords.join(", "))
                })
                .collect();
            e.field_raw("segmentation", &format!("[{}]", polys.join(", ")), true);
            e.field_raw("area", &fmt_num(ann.area, 2), true);
            let bbox: Vec<String> = ann.bbox.iter().map(|&v| fmt_num(v, 2)).collect();
            e.field_raw("bbox", &format!("[{}]", bbox.join(", ")), true);
            e.field_raw("iscrowd", &ann.iscrowd.to_string(), false);
            e.line_close("}", i + 1 < n);
        }
        e.line_close("],", false);
    }

    // categories
    e.line_open("\"categories\": [");
    let n = doc.categories.len();
    for (i, cat) in doc.categories.iter().enumerate() {
        e.line_open("{");
        e.field_raw("id", &cat.id.to_string(), true);
        e.field_str("name", &cat.name, true);
        e.field_str("supercategory", &cat.supercategory, false);
        e.line_close("}", i + 1 < n);
    }
    e.line_close("]", false);

    e.line_close("}", false);
    e.out
}

/// Parses a document previously produced by [`serialize`] (or any
/// structurally compatible COCO JSON).
pub fn parse_document(text: &str) -> Result<CocoDocument, serde_json::Error> {
    serde_json::from_str(text)
}

// ------------------------------------------------------------- validate ----

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BadImageId(u32),
    DuplicateImageId(u32),
    DuplicateFileName(String),
    BadImageDims(u32),
    BadAnnotationId(u32),
    DuplicateAnnotationId(u32),
    DanglingImageRef { annotation_id: u32, image_id: u32 },
    BadCategoryRef { annotation_id: u32, category_id: u32 },
    UnexpectedCategory,
    PolygonTooSmall(u32),
    NonPositiveArea(u32),
    BboxOutOfBounds(u32),
    NonZeroIsCrowd(u32),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::BadImageId(id) => write!(f, "image id {id} is not positive"),
            Violation::DuplicateImageId(id) => write!(f, "duplicate image id {id}"),
            Violation::DuplicateFileName(name) => write!(f, "duplicate file name `{name}`"),
            Violation::BadImageDims(id) => write!(f, "image {id} has zero width or height"),
            Violation::BadAnnotationId(id) => write!(f, "annotation id {id} is not positive"),
            Violation::DuplicateAnnotationId(id) => write!(f, "duplicate annotation id {id}"),
            Violation::DanglingImageRef {
                annotation_id,
                image_id,
            } => write!(
                f,
                "annotation {annotation_id} references missing image {image_id}"
            ),
            Violation::BadCategoryRef {
                annotation_id,
                category_id,
            } => write!(
                f,
                "annotation {annotation_id} references category {category_id}, expected {CATEGORY_ID}"
            ),
            Violation::UnexpectedCategory => write!(
                f,
                "categories must be exactly [{{id: {CATEGORY_ID}, name: \"{CATEGORY_NAME}\"}}]"
            ),
            Violation::PolygonTooSmall(id) => {
                write!(f, "annotation {id} polygon has fewer than 3 points")
            }
            Violation::NonPositiveArea(id) => write!(f, "annotation {id} area is not positive"),
            Violation::BboxOutOfBounds(id) => {
                write!(f, "annotation {id} bbox exceeds its image bounds")
            }
            Violation::NonZeroIsCrowd(id) => write!(f, "annotation {id} has iscrowd != 0"),
        }
    }
}

/// Checks every document invariant; an empty list means the document is
/// valid. Violations are data, not errors.
pub fn validate(doc: &CocoDocument) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut image_dims: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    let mut file_names = BTreeSet::new();
    for img in &doc.images {
        if img.id == 0 {
            violations.push(Violation::BadImageId(img.id));
        }
        if image_dims.insert(img.id, (img.width, img.height)).is_some() {
            violations.push(Violation::DuplicateImageId(img.id));
        }
        if !file_names.insert(img.file_name.as_str()) {
            violations.push(Violation::DuplicateFileName(img.file_name.clone()));
        }
        if img.width == 0 || img.height == 0 {
            violations.push(Violation::BadImageDims(img.id));
        }
    }

    let category_ok = doc.categories.len() == 1
        && doc.categories[0].id == CATEGORY_ID
        && doc.categories[0].name == CATEGORY_NAME;
    if !category_ok {
        violations.push(Violation::UnexpectedCategory);
    }

    let mut ann_ids = BTreeSet::new();
    for ann in &doc.annotations {
        if ann.id == 0 {
            violations.push(Violation::BadAnnotationId(ann.id));
        }
        if !ann_ids.insert(ann.id) {
            violations.push(Violation::DuplicateAnnotationId(ann.id));
        }
        let dims = image_dims.get(&ann.image_id);
        if dims.is_none() {
            violations.push(Violation::DanglingImageRef {
                annotation_id: ann.id,
                image_id: ann.image_id,
            });
        }
        if ann.category_id != CATEGORY_ID {
            violations.push(Violation::BadCategoryRef {
                annotation_id: ann.id,
                category_id: ann.category_id,
            });
        }
        let polygon_ok = ann.segmentation.len() == 1
            && ann.segmentation[0].len() >= 6
            && ann.segmentation[0].len() % 2 == 0;
        if !polygon_ok {
            violations.push(Violation::PolygonTooSmall(ann.id));
        }
        if !(ann.area > 0.0) {
            violations.push(Violation::NonPositiveArea(ann.id));
        }
        if let Some(&(w, h)) = dims {
            let [x, y, bw, bh] = ann.bbox;
            if x < 0.0
                || y < 0.0
                || bw <= 0.0
                || bh <= 0.0
                || x + bw > f64::from(w)
                || y + bh > f64::from(h)
            {
                violations.push(Violation::BboxOutOfBounds(ann.id));
            }
        }
        if ann.iscrowd != 0 {
            violations.push(Violation::NonZeroIsCrowd(ann.id));
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{BinaryMask, BoundingBox, Contour, Point};

    fn asset(n: u32, view: char, uuid_hex: u8) -> ImageAsset {
        let uuid: Uuid = format!(
            "{:08x}-0000-4000-8000-000000000000",
            u32::from(uuid_hex) * 7919 + 13
        )
        .parse()
        .unwrap();
        ImageAsset {
            original_filename: format!("{n}{view}.jpg"),
            record_id: Some(n),
            view_code: Some(view),
            uuid,
            uuid_filename: format!("{uuid}.jpg"),
            width_px: 100,
            height_px: 80,
            content_hash: "00".repeat(32),
            sidecar_identity: false,
        }
    }

    fn result_for() -> SegmentationResult {
        let mut mask = BinaryMask::new(100, 80);
        for y in 10..20 {
            for x in 10..30 {
                mask.set(x, y, true);
            }
        }
        SegmentationResult {
            contour: Contour {
                points: vec![
                    Point::new(10, 10),
                    Point::new(29, 10),
                    Point::new(29, 19),
                    Point::new(10, 19),
                ],
            },
            bbox: BoundingBox {
                x: 10,
                y: 10,
                w: 20,
                h: 10,
            },
            area_px: mask.count_set(),
            mask,
            flags: Default::default(),
        }
    }

    fn dataset_info() -> DatasetInfo {
        crate::manifest::parse_dataset_info(
            "- Description: demo\n- Url: https://x.test\n- Collection_short_name: demo\n\
             - Version: 1.0\n- Year: 2007\n- Contributor: a@b\n- Date_created: 2025-01-01\n\
             - Licenses:\n  - id: 1\n    name: L\n    url: https://l.test\n",
        )
        .unwrap()
    }

    fn record(n: u32) -> RecordMetadata {
        let mut fields = IndexMap::new();
        fields.insert("Sitename".to_string(), "WARREN HILL".to_string());
        fields.insert("Country".to_string(), "ENGLAND".to_string());
        RecordMetadata {
            record_id: n,
            description: "POSSIBLE ROUGHOUT".into(),
            fields,
        }
    }

    fn build_small(n_assets: u32, excluded: &[u32]) -> CocoDocument {
        let assets: Vec<ImageAsset> = (1..=n_assets)
            .map(|i| asset(i, 'f', i as u8))
            .collect();
        let records: BTreeMap<u32, RecordMetadata> =
            (1..=n_assets).map(|i| (i, record(i))).collect();
        let results: BTreeMap<Uuid, SegOutcome> = assets
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let outcome = if excluded.contains(&(i as u32 + 1)) {
                    SegOutcome::ExcludedEmpty
                } else {
                    SegOutcome::Segmented(result_for())
                };
                (a.uuid, outcome)
            })
            .collect();
        build_document(&dataset_info(), &assets, &records, &results)
            .unwrap()
            .0
    }

    #[test]
    fn document_counts_and_alignment() {
        let doc = build_small(10, &[]);
        assert_eq!(doc.images.len(), 10);
        assert_eq!(doc.annotations.len(), 10);
        assert_eq!(doc.categories.len(), 1);
        // Images sorted by file_name; ids sequential in that order.
        let mut names: Vec<&str> = doc.images.iter().map(|i| i.file_name.as_str()).collect();
        let sorted = {
            let mut s = names.clone();
            s.sort();
            s
        };
        assert_eq!(names, sorted);
        names.dedup();
        assert_eq!(names.len(), 10);
        for (i, img) in doc.images.iter().enumerate() {
            assert_eq!(img.id, i as u32 + 1);
        }
        for (i, ann) in doc.annotations.iter().enumerate() {
            assert_eq!(ann.id, i as u32 + 1);
            assert_eq!(ann.area, result_for().area_px as f64);
        }
    }

    #[test]
    fn excluded_assets_become_images_without_annotations() {
        let doc = build_small(10, &[4]);
        assert_eq!(doc.images.len(), 10);
        assert_eq!(doc.annotations.len(), 9);
        assert!(validate(&doc).is_empty());
    }

    #[test]
    fn empty_asset_list_builds_a_shell_document() {
        let (doc, warnings) = build_document(
            &dataset_info(),
            &[],
            &BTreeMap::new(),
            &BTreeMap::new(),
        )
        .unwrap();
        assert!(warnings.is_empty());
        assert!(doc.images.is_empty());
        assert!(doc.annotations.is_empty());
        assert_eq!(doc.categories.len(), 1);
        assert_eq!(doc.info.year, 2007);
        assert_eq!(doc.licenses.len(), 1);
    }

    #[test]
    fn missing_result_is_an_error_and_missing_record_a_warning() {
        let assets = vec![asset(1, 'f', 1)];
        let err = build_document(
            &dataset_info(),
            &assets,
            &BTreeMap::new(),
            &BTreeMap::new(),
        )
        .unwrap_err();
        assert_eq!(err, CocoError::ResultMissing(assets[0].uuid));

        let results: BTreeMap<Uuid, SegOutcome> =
            [(assets[0].uuid, SegOutcome::Segmented(result_for()))].into();
        let (doc, warnings) =
            build_document(&dataset_info(), &assets, &BTreeMap::new(), &results).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(doc.images[0].archaeology.fields.is_empty());
        assert_eq!(doc.images[0].archaeology.record_id, Some(1));
    }

    #[test]
    fn serialization_is_deterministic_and_round_trips() {
        let doc = build_small(5, &[2]);
        let a = serialize(&doc);
        let b = serialize(&doc);
        assert_eq!(a, b);

        let parsed = parse_document(&a).unwrap();
        let c = serialize(&parsed);
        assert_eq!(a, c, "serialize -> parse -> serialize must be byte-identical");
        assert_eq!(parsed, doc);
    }

    #[test]
    fn number_formatting_rules() {
        assert_eq!(fmt_num(4.0, 2), "4");
        assert_eq!(fmt_num(4.10, 2), "4.1");
        assert_eq!(fmt_num(4.125, 2), "4.13");
        assert_eq!(fmt_num(0.0, 2), "0");
        assert_eq!(fmt_num(-0.001, 2), "0");
        assert_eq!(fmt_num(12.34, 1), "12.3");
    }

    #[test]
    fn validate_accepts_the_built_document() {
        assert!(validate(&build_small(3, &[])).is_empty());
    }

    #[test]
    fn dangling_image_reference_is_a_violation() {
        let mut doc = build_small(3, &[]);
        doc.annotations[1].image_id = 999;
        let violations = validate(&doc);
        assert!(violations.iter().any(|v| matches!(
            v,
            Violation::DanglingImageRef {
                image_id: 999,
                ..
            }
        )));
    }

    #[test]
    fn second_category_is_a_violation() {
        let mut doc = build_small(2, &[]);
        doc.categories.push(CocoCategory {
            id: 2,
            name: "other".into(),
            supercategory: "other".into(),
        });
        assert!(validate(&doc).contains(&Violation::UnexpectedCategory));
    }

    #[test]
    fn single_field_mutations_always_violate() {
        let doc = build_small(4, &[]);
        assert!(validate(&doc).is_empty());

        for mutation in 0..6 {
            let mut mutated = doc.clone();
            match mutation {
                0 => mutated.images[2].id = mutated.images[0].id,
                1 => mutated.annotations[1].image_id = 4242,
                2 => mutated.annotations[3].category_id = 9,
                3 => mutated.images[1].file_name = mutated.images[3].file_name.clone(),
                4 => mutated.annotations[0].area = 0.0,
                5 => mutated.annotations[2].bbox = [90.0, 70.0, 20.0, 20.0],
                _ => unreachable!(),
            }
            assert!(
                !validate(&mutated).is_empty(),
                "mutation {mutation} produced no violation"
            );
        }
    }

    #[test]
    fn bbox_out_of_bounds_is_detected() {
        let mut doc = build_small(1, &[]);
        doc.annotations[0].bbox = [95.0, 5.0, 10.0, 10.0]; // 105 > width 100
        assert!(validate(&doc).contains(&Violation::BboxOutOfBounds(1)));
    }
}
