//! Parsing and rendering of the collection description file `dataset_info.md`.
//!
//! The file is a flat list of `Key: value` lines (Markdown bullets and bold
//! markers are tolerated and stripped). The `Licenses` key opens a block of
//! `id` / `name` / `url` triples, one triple per license, where each new
//! `id` line starts the next license.

use indexmap::IndexMap;
use thiserror::Error;

/// License entry of the source collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LicenseInfo {
    pub id: u32,
    pub name: String,
    pub url: String,
}

/// Collection-level metadata feeding the `info` and `licenses` sections of
/// the annotation document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInfo {
    pub description: String,
    pub url: String,
    /// Short token naming the collection; also the output JSON filename stem.
    pub collection_short_name: String,
    pub version: String,
    pub year: i32,
    pub contributor: String,
    pub date_created: String,
    pub licenses: Vec<LicenseInfo>,
    /// Keys we do not know about, preserved verbatim for forward compatibility.
    pub extra: IndexMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("license block is incomplete or has a duplicate id")]
    MalformedLicense,
    #[error("`Year` is not an integer: `{0}`")]
    BadYear(String),
    #[error("collection short name `{0}` is empty or contains whitespace or path separators")]
    BadShortName(String),
}

const REQUIRED_KEYS: &[&str] = &[
    "description",
    "url",
    "collection_short_name",
    "version",
    "year",
    "contributor",
    "date_created",
];

/// Strips Markdown list markers, bold/emphasis markers and surrounding
/// whitespace from a manifest line.
fn clean_line(line: &str) -> &str {
    let mut s = line.trim();
    for marker in ["- ", "* ", "+ "] {
        if let Some(rest) = s.strip_prefix(marker) {
            s = rest.trim_start();
            break;
        }
    }
    s
}

fn split_key_value(line: &str) -> Option<(String, String)> {
    let (raw_key, raw_value) = line.split_once(':')?;
    let key = raw_key.trim().trim_matches('*').trim_matches('_').trim();
    if key.is_empty() || key.starts_with('#') {
        return None;
    }
    Some((key.to_string(), raw_value.trim().to_string()))
}

/// Parses `dataset_info.md` contents into a validated [`DatasetInfo`].
pub fn parse_dataset_info(text: &str) -> Result<DatasetInfo, ManifestError> {
    let mut known: IndexMap<String, String> = IndexMap::new();
    let mut extra: IndexMap<String, String> = IndexMap::new();
    let mut licenses: Vec<LicenseBuilder> = Vec::new();
    let mut in_licenses = false;

    for raw in text.lines() {
        let line = clean_line(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = split_key_value(line) else {
            continue;
        };
        let lower = key.to_ascii_lowercase();

        if in_licenses {
            match lower.as_str() {
                "id" => licenses.push(LicenseBuilder {
                    id: Some(value),
                    ..LicenseBuilder::default()
                }),
                "name" => match licenses.last_mut() {
                    Some(lic) if lic.name.is_none() => lic.name = Some(value),
                    _ => return Err(ManifestError::MalformedLicense),
                },
                "url" => match licenses.last_mut() {
                    Some(lic) if lic.url.is_none() => lic.url = Some(value),
                    _ => return Err(ManifestError::MalformedLicense),
                },
                _ => {
                    // Any other key closes the license block.
                    in_licenses = false;
                    record_key(&mut known, &mut extra, &lower, key, value);
                }
            }
            continue;
        }

        if lower == "licenses" {
            in_licenses = true;
            continue;
        }
        record_key(&mut known, &mut extra, &lower, key, value);
    }

    for &req in REQUIRED_KEYS {
        if !known.contains_key(req) {
            return Err(ManifestError::MissingKey(required_display_name(req)));
        }
    }

    let year_text = known["year"].clone();
    let year: i32 = year_text
        .parse()
        .map_err(|_| ManifestError::BadYear(year_text.clone()))?;
    if !(1000..=9999).contains(&year) {
        return Err(ManifestError::BadYear(year_text));
    }

    let short_name = known["collection_short_name"].clone();
    if short_name.is_empty()
        || short_name
            .chars()
            .any(|c| c.is_whitespace() || c == '/' || c == '\\')
    {
        return Err(ManifestError::BadShortName(short_name));
    }

    let mut built = Vec::new();
    let mut seen_ids = Vec::new();
    for lic in licenses {
        let lic = lic.build()?;
        if seen_ids.contains(&lic.id) {
            return Err(ManifestError::MalformedLicense);
        }
        seen_ids.push(lic.id);
        built.push(lic);
    }

    Ok(DatasetInfo {
        description: known["description"].clone(),
        url: known["url"].clone(),
        collection_short_name: short_name,
        version: known["version"].clone(),
        year,
        contributor: known["contributor"].clone(),
        date_created: known["date_created"].clone(),
        licenses: built,
        extra,
    })
}

fn record_key(
    known: &mut IndexMap<String, String>,
    extra: &mut IndexMap<String, String>,
    lower: &str,
    original_key: String,
    value: String,
) {
    if REQUIRED_KEYS.contains(&lower) {
        known.insert(lower.to_string(), value);
    } else {
        extra.insert(original_key, value);
    }
}

fn required_display_name(lower: &str) -> &'static str {
    match lower {
        "description" => "Description",
        "url" => "Url",
        "collection_short_name" => "Collection_short_name",
        "version" => "Version",
        "year" => "Year",
        "contributor" => "Contributor",
        "date_created" => "Date_created",
        other => unreachable!("unknown required key {other}"),
    }
}

#[derive(Default)]
struct LicenseBuilder {
    id: Option<String>,
    name: Option<String>,
    url: Option<String>,
}

impl LicenseBuilder {
    fn build(self) -> Result<LicenseInfo, ManifestError> {
        let id_text = self.id.ok_or(ManifestError::MalformedLicense)?;
        let id: u32 = id_text
            .parse()
            .map_err(|_| ManifestError::MalformedLicense)?;
        if id == 0 {
            return Err(ManifestError::MalformedLicense);
        }
        Ok(LicenseInfo {
            id,
            name: self.name.ok_or(ManifestError::MalformedLicense)?,
            url: self.url.ok_or(ManifestError::MalformedLicense)?,
        })
    }
}

/// Renders a [`DatasetInfo`] back into manifest syntax. `parse_dataset_info`
/// applied to the result reproduces the input structure.
pub fn render_dataset_info(info: &DatasetInfo) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: &str| {
        out.push_str("- ");
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v);
        out.push('\n');
    };
    push("Description", &info.description);
    push("Url", &info.url);
    push("Collection_short_name", &info.collection_short_name);
    push("Version", &info.version);
    push("Year", &info.year.to_string());
    push("Contributor", &info.contributor);
    push("Date_created", &info.date_created);
    if !info.licenses.is_empty() {
        out.push_str("- Licenses:\n");
        for lic in &info.licenses {
            out.push_str(&format!("  - id: {}\n", lic.id));
            out.push_str(&format!("    name: {}\n", lic.name));
            out.push_str(&format!("    url: {}\n", lic.url));
        }
    }
    for (k, v) in &info.extra {
        out.push_str(&format!("- {k}: {v}\n"));
    }
    out
}
