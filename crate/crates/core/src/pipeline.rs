//! The processing stage: UUID identity assignment over a directory of
//! original images, per-image segmentation, optional diagnostic overlays,
//! and the enriched COCO document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use uuid::Uuid;

use crate::coco::{self, SegOutcome};
use crate::harvest::read_records_csv;
use crate::identity::{self, IdentityError, UuidSource};
use crate::manifest::{parse_dataset_info, ManifestError};
use crate::overlay::{render_overlay, OverlayOptions};
use crate::segment::{segment, SegmentError, SegmentOptions};

#[derive(Debug, Clone)]
pub struct ProcessParams {
    pub original_images_dir: PathBuf,
    pub uuid_images_dir: PathBuf,
    pub output_dir: PathBuf,
    pub dataset_info_path: PathBuf,
    /// Records CSV from the harvest stage; enrichment is skipped when absent.
    pub records_csv_path: Option<PathBuf>,
    pub overlays: bool,
    pub seg_options: SegmentOptions,
    pub uuid_seed: Option<u64>,
    /// Worker threads for the per-image stage; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

#[derive(Debug, Default)]
pub struct ProcessSummary {
    pub images: usize,
    pub annotations: usize,
    /// Images without an annotation (nothing survived thresholding).
    pub excluded: usize,
    /// Input files that could not be decoded at all.
    pub skipped_files: usize,
    /// Annotated images carrying at least one quality flag.
    pub quality_flagged: usize,
    pub coco_path: PathBuf,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset info: {0}")]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("annotation document: {0}")]
    Coco(#[from] coco::CocoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn is_empty_collection(&self) -> bool {
        matches!(self, PipelineError::Identity(IdentityError::EmptyCollection(_)))
    }
}

/// Runs identity assignment, segmentation, optional overlays, and writes
/// `<collection_short_name>.json` into the output directory.
pub fn process_images(params: &ProcessParams) -> Result<ProcessSummary, PipelineError> {
    let info_text = std::fs::read_to_string(&params.dataset_info_path)?;
    let info = parse_dataset_info(&info_text)?;

    let outcome = identity::process_collection(
        &params.original_images_dir,
        &params.uuid_images_dir,
        UuidSource::from_seed_opt(params.uuid_seed),
    )?;

    let records = match &params.records_csv_path {
        Some(path) if path.exists() => read_records_csv(path).unwrap_or_default(),
        _ => BTreeMap::new(),
    };

    std::fs::create_dir_all(&params.output_dir)?;
    let overlays_dir = params.output_dir.join("overlays");
    if params.overlays {
        std::fs::create_dir_all(&overlays_dir)?;
    }

    let run = |assets: &[identity::ImageAsset]| -> Vec<(Uuid, Result<SegOutcome, String>)> {
        assets
            .par_iter()
            .map(|asset| {
                let path = params.uuid_images_dir.join(&asset.uuid_filename);
                let outcome = segment_one(&path, asset, params, &overlays_dir);
                (asset.uuid, outcome)
            })
            .collect()
    };
    let segmented: Vec<(Uuid, Result<SegOutcome, String>)> = match params.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool construction")
            .install(|| run(&outcome.assets)),
        None => run(&outcome.assets),
    };

    let mut summary = ProcessSummary {
        images: outcome.assets.len(),
        skipped_files: outcome.skipped.len(),
        ..Default::default()
    };
    for skip in &outcome.skipped {
        summary
            .warnings
            .push(format!("skipped `{}`: {}", skip.filename, skip.reason));
    }

    let mut results: BTreeMap<Uuid, SegOutcome> = BTreeMap::new();
    for (uuid, outcome) in segmented {
        match outcome {
            Ok(SegOutcome::Segmented(result)) => {
                summary.annotations += 1;
                if !result.flags.is_empty() {
                    summary.quality_flagged += 1;
                }
                results.insert(uuid, SegOutcome::Segmented(result));
            }
            Ok(SegOutcome::ExcludedEmpty) => {
                summary.excluded += 1;
                summary
                    .warnings
                    .push(format!("{uuid}: no foreground found; image kept without annotation"));
                results.insert(uuid, SegOutcome::ExcludedEmpty);
            }
            Err(detail) => {
                summary.excluded += 1;
                summary.warnings.push(format!("{uuid}: {detail}"));
                results.insert(uuid, SegOutcome::ExcludedEmpty);
            }
        }
    }

    let (doc, doc_warnings) = coco::build_document(&info, &outcome.assets, &records, &results)?;
    summary.warnings.extend(doc_warnings);

    let coco_path = params
        .output_dir
        .join(format!("{}.json", info.collection_short_name));
    std::fs::write(&coco_path, coco::serialize(&doc))?;
    summary.coco_path = coco_path;
    Ok(summary)
}

fn segment_one(
    path: &Path,
    asset: &identity::ImageAsset,
    params: &ProcessParams,
    overlays_dir: &Path,
) -> Result<SegOutcome, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("read failed: {e}"))?;
    let image = image::load_from_memory(&bytes).map_err(|e| format!("decode failed: {e}"))?;
    match segment(&image, &params.seg_options) {
        Ok(result) => {
            if params.overlays {
                let rgb = image.to_rgb8();
                let rendered = render_overlay(&rgb, &result, &OverlayOptions::default())
                    .map_err(|e| format!("overlay failed: {e}"))?;
                let stem = asset
                    .uuid_filename
                    .rsplit_once('.')
                    .map_or(asset.uuid_filename.as_str(), |(s, _)| s);
                let out = overlays_dir.join(format!("{stem}.png"));
                rendered
                    .save_with_format(&out, image::ImageFormat::Png)
                    .map_err(|e| format!("overlay save failed: {e}"))?;
            }
            Ok(SegOutcome::Segmented(result))
        }
        Err(SegmentError::EmptyForeground) => Ok(SegOutcome::ExcludedEmpty),
        Err(e) => Err(format!("segmentation failed: {e}")),
    }
}
