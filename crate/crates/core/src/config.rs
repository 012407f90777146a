//! Run configuration: a TOML file merged with command-line overrides,
//! validated into a [`RunConfig`] every other module consumes.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

/// How the segmentation threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Maximise between-class variance over the grey histogram.
    Otsu,
    /// Fixed grey level; foreground is everything strictly above it.
    Fixed(u8),
}

/// Pixel adjacency used by connected-component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// CSS selectors the record extractor keys on. Overridable so the extractor
/// survives markup changes without a code change.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default)]
pub struct ExtractorSelectors {
    pub record_title: String,
    pub description: String,
    pub details_rows: String,
    pub image_anchors: String,
}

impl Default for ExtractorSelectors {
    fn default() -> Self {
        Self {
            record_title: "h1.record-title".into(),
            description: "p.description".into(),
            details_rows: "table.details tr".into(),
            image_anchors: "div.views a".into(),
        }
    }
}

/// Validated toolkit configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Record page URL template containing exactly one `{id}` placeholder.
    pub base_record_url_template: String,
    pub id_range: RangeInclusive<u32>,
    pub min_delay_s: f64,
    pub max_delay_s: f64,
    pub max_retries: u32,
    pub user_agent: String,
    pub original_images_dir: PathBuf,
    pub uuid_images_dir: PathBuf,
    pub output_dir: PathBuf,
    pub threshold_mode: ThresholdMode,
    pub connectivity: Connectivity,
    pub polygon_epsilon_px: f64,
    pub view_codes: Vec<char>,
    pub rng_seed: Option<u64>,
    pub selectors: ExtractorSelectors,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base_record_url_template:
                "https://archaeologydataservice.ac.uk/archives/view/bifaces/bf_record.cfm?id={id}"
                    .into(),
            id_range: 1..=3556,
            min_delay_s: 1.0,
            max_delay_s: 3.0,
            max_retries: 3,
            user_agent: concat!(
                "handaxe/",
                env!("CARGO_PKG_VERSION"),
                " (research collection harvester)"
            )
            .into(),
            original_images_dir: PathBuf::from("original_images"),
            uuid_images_dir: PathBuf::from("uuid_images"),
            output_dir: PathBuf::from("."),
            threshold_mode: ThresholdMode::Otsu,
            connectivity: Connectivity::Eight,
            polygon_epsilon_px: 0.0,
            view_codes: vec!['f', 'r', 's'],
            rng_seed: None,
            selectors: ExtractorSelectors::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("template must contain exactly one `{{id}}` placeholder: `{0}`")]
    BadTemplate(String),
    #[error("view_codes must be non-empty single characters, all distinct")]
    BadViewCodes,
    #[error("threshold_mode must be `otsu` or `fixed` (with fixed_threshold_level)")]
    BadThresholdMode,
    #[error("connectivity must be 4 or 8")]
    BadConnectivity,
    #[error("failed to parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
}

/// Config file / CLI override surface: every field optional, later layers win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub base_record_url_template: Option<String>,
    pub id_start: Option<u32>,
    pub id_end: Option<u32>,
    pub min_delay_s: Option<f64>,
    pub max_delay_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub user_agent: Option<String>,
    pub original_images_dir: Option<PathBuf>,
    pub uuid_images_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub threshold_mode: Option<String>,
    pub fixed_threshold_level: Option<u8>,
    pub connectivity: Option<u8>,
    pub polygon_epsilon_px: Option<f64>,
    pub view_codes: Option<Vec<String>>,
    pub rng_seed: Option<u64>,
    pub selectors: Option<ExtractorSelectors>,
}

impl PartialConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Overlays `later` on top of `self`; fields set in `later` win.
    pub fn merged(mut self, later: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if later.$f.is_some() { self.$f = later.$f; } )* };
        }
        take!(
            base_record_url_template,
            id_start,
            id_end,
            min_delay_s,
            max_delay_s,
            max_retries,
            user_agent,
            original_images_dir,
            uuid_images_dir,
            output_dir,
            threshold_mode,
            fixed_threshold_level,
            connectivity,
            polygon_epsilon_px,
            view_codes,
            rng_seed,
            selectors
        );
        self
    }

    /// Applies defaults for absent fields and validates the result.
    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        let d = RunConfig::default();
        let threshold_mode = match self.threshold_mode.as_deref() {
            None => match self.fixed_threshold_level {
                Some(level) => ThresholdMode::Fixed(level),
                None => d.threshold_mode,
            },
            Some("otsu") => ThresholdMode::Otsu,
            Some("fixed") => {
                ThresholdMode::Fixed(self.fixed_threshold_level.unwrap_or(128))
            }
            Some(_) => return Err(ConfigError::BadThresholdMode),
        };
        let connectivity = match self.connectivity {
            None => d.connectivity,
            Some(4) => Connectivity::Four,
            Some(8) => Connectivity::Eight,
            Some(_) => return Err(ConfigError::BadConnectivity),
        };
        let view_codes = match self.view_codes {
            None => d.view_codes,
            Some(list) => {
                let mut codes = Vec::with_capacity(list.len());
                for item in &list {
                    let mut chars = item.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => codes.push(c),
                        _ => return Err(ConfigError::BadViewCodes),
                    }
                }
                codes
            }
        };

        let cfg = RunConfig {
            base_record_url_template: self
                .base_record_url_template
                .unwrap_or(d.base_record_url_template),
            id_range: self.id_start.unwrap_or(*d.id_range.start())
                ..=self.id_end.unwrap_or(*d.id_range.end()),
            min_delay_s: self.min_delay_s.unwrap_or(d.min_delay_s),
            max_delay_s: self.max_delay_s.unwrap_or(d.max_delay_s),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
            user_agent: self.user_agent.unwrap_or(d.user_agent),
            original_images_dir: self.original_images_dir.unwrap_or(d.original_images_dir),
            uuid_images_dir: self.uuid_images_dir.unwrap_or(d.uuid_images_dir),
            output_dir: self.output_dir.unwrap_or(d.output_dir),
            threshold_mode,
            connectivity,
            polygon_epsilon_px: self.polygon_epsilon_px.unwrap_or(d.polygon_epsilon_px),
            view_codes,
            rng_seed: self.rng_seed,
            selectors: self.selectors.unwrap_or(d.selectors),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.min_delay_s.is_finite()
            || !self.max_delay_s.is_finite()
            || self.min_delay_s < 0.0
            || self.min_delay_s > self.max_delay_s
        {
            return Err(ConfigError::InvalidRange(format!(
                "min_delay_s={} max_delay_s={}",
                self.min_delay_s, self.max_delay_s
            )));
        }
        if self.id_range.is_empty() {
            return Err(ConfigError::InvalidRange(format!(
                "id range {}..={} is empty",
                self.id_range.start(),
                self.id_range.end()
            )));
        }
        if self.base_record_url_template.matches("{id}").count() != 1 {
            return Err(ConfigError::BadTemplate(
                self.base_record_url_template.clone(),
            ));
        }
        if self.view_codes.is_empty() {
            return Err(ConfigError::BadViewCodes);
        }
        let mut seen = self.view_codes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.view_codes.len() {
            return Err(ConfigError::BadViewCodes);
        }
        if !self.polygon_epsilon_px.is_finite() || self.polygon_epsilon_px < 0.0 {
            return Err(ConfigError::InvalidRange(format!(
                "polygon_epsilon_px={}",
                self.polygon_epsilon_px
            )));
        }
        Ok(())
    }
}

/// Loads a run configuration from an optional file plus override layer
/// (typically built from CLI flags). Flags win over the file.
pub fn load_run_config(
    file: Option<&std::path::Path>,
    overrides: PartialConfig,
) -> Result<RunConfig, ConfigError> {
    let base = match file {
        Some(path) => PartialConfig::from_file(path)?,
        None => PartialConfig::default(),
    };
    base.merged(overrides).into_config()
}
