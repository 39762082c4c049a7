//! In-memory image dataset with train/validation/test split handling.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RandomStream};

use super::idx::IdxTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }
}

/// Images as row-major real vectors in [0, 1] plus integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<u8>,
    num_classes: usize,
    split_tag: SplitTag,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<u8>, num_classes: usize, split_tag: SplitTag) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} images", images.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(
                "pixel outside [0, 1]".to_string(),
            ));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
            split_tag,
        })
    }

    /// Builds a dataset from parsed IDX image and label tensors. Pixels are
    /// bytes divided by 255, flattened row-major.
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor, split_tag: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape(
                "Dataset::from_idx",
                format!("{} images", images.len()),
                format!("{} labels", labels.len()),
            ));
        }
        let pixels = images.item_size();
        let matrix = Matrix::from_vec(
            images.len(),
            pixels,
            images.data.iter().map(|&b| normalize_byte(b)).collect(),
        )?;
        Dataset::new(matrix, labels.data.clone(), 10, split_tag)
    }

    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of pixels per image (m).
    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    /// Copies the rows at `indices` into a new batch matrix.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.dim());
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.images.row(i));
        }
        out
    }

    /// Seeded 0.8/0.2 split into train and validation subsets. The shuffle is
    /// a Fisher-Yates permutation of indices driven by `seed`, so the same
    /// seed always yields the same membership.
    pub fn split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        if self.is_empty() {
            return Err(Error::EmptyInput("split on empty dataset".to_string()));
        }
        let n = self.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut stream = RandomStream::derive(seed, "dataset-split", 0);
        stream.shuffle(&mut indices);
        let train_len = ((n as f64) * 0.8).round() as usize;
        let (train_idx, val_idx) = indices.split_at(train_len);

        let build = |idx: &[usize], tag: SplitTag| -> Result<Dataset> {
            let images = self.gather(idx);
            let labels = idx.iter().map(|&i| self.labels[i]).collect();
            Dataset::new(images, labels, self.num_classes, tag)
        };
        Ok((
            build(train_idx, SplitTag::Train)?,
            build(val_idx, SplitTag::Validation)?,
        ))
    }
}

/// Maps a raw byte into [0, 1].
pub fn normalize_byte(b: u8) -> f64 {
    f64::from(b) / 255.0
}
