//! Data ingestion (IDX files), dataset splits, and model persistence.

mod archive;
mod dataset;
mod idx;

pub use archive::{
    load_archive, load_archive_expecting, save_archive, Archive, ArchiveKind, NamedTensor,
    ARCHIVE_MAGIC, ARCHIVE_VERSION,
};
pub use dataset::{normalize_byte, Dataset, SplitTag};
pub use idx::{load_idx, save_idx, IdxTensor};

use crate::error::Result;
use std::path::Path;

/// Loads an image/label IDX pair into a dataset.
pub fn load_dataset(images_path: &Path, labels_path: &Path, split_tag: SplitTag) -> Result<Dataset> {
    let images = load_idx(images_path)?;
    let labels = load_idx(labels_path)?;
    Dataset::from_idx(&images, &labels, split_tag)
}
