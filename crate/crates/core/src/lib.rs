//! Toolkit for turning a legacy web-published artifact image archive into a
//! segmentation-ready dataset: polite harvesting of record pages and images,
//! UUID identity assignment, classical single-object segmentation, and
//! COCO-format annotation export enriched with record metadata.

pub mod client;
pub mod coco;
pub mod config;
pub mod extract;
pub mod harvest;
pub mod identity;
pub mod imagemeta;
pub mod journal;
pub mod manifest;
pub mod mock;
pub mod overlay;
pub mod pipeline;
pub mod robots;
pub mod segment;
