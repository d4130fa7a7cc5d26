//! MNIST ingestion, one-time augmentation, split-MNIST task construction and
//! the binary cache container.

mod augment;
pub mod cache;
mod fetch;
mod idx;
mod split;

pub use augment::{augment_dataset, AugmentParams, Jitter};
pub use cache::{CacheContainer, CacheError, CACHE_VERSION};
pub use fetch::{fetch_mnist, FetchManifest, MANIFEST_NAME, MNIST_FILES};
pub use idx::{encode_idx_images, encode_idx_labels, parse_idx, read_idx_file, Idx};
pub use split::{
    build_split_mnist, load_mnist_dir, load_tasks, save_tasks, tasks_from_container, tasks_to_container, DatasetMeta,
    MnistSplits, SplitConfig, TaskDataset,
};

use thiserror::Error;

use crate::linalg::Matrix;

pub const MNIST_SIDE: usize = 28;
pub const MNIST_CLASSES: u8 = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unrecognised IDX magic 0x{0:08X} (expected 0x00000803 images or 0x00000801 labels)")]
    Magic(u32),
    #[error("IDX payload length mismatch: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },
    #[error("label {label} outside class range [0, {classes})")]
    Label { label: u8, classes: u8 },
    #[error("inconsistent image set: {0}")]
    Inconsistent(String),
    #[error("invalid data configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("download failed for {url}: {reason}")]
    Fetch { url: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// A set of equally sized grayscale images with digit labels.
///
/// `pixels` holds one flattened image per row with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    height: usize,
    width: usize,
    pixels: Matrix,
    labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(height: usize, width: usize, pixels: Matrix, labels: Vec<u8>) -> Result<Self, DataError> {
        if pixels.cols() != height * width {
            return Err(DataError::Inconsistent(format!(
                "{} pixels per row for {}x{} images",
                pixels.cols(),
                height,
                width
            )));
        }
        if pixels.rows() != labels.len() {
            return Err(DataError::Inconsistent(format!(
                "{} images but {} labels",
                pixels.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= MNIST_CLASSES) {
            return Err(DataError::Label {
                label,
                classes: MNIST_CLASSES,
            });
        }
        if pixels.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::Inconsistent("pixel outside [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &Matrix {
        &self.pixels
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.pixels.row(i)
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut Matrix {
        &mut self.pixels
    }

    /// Keeps the listed samples, in order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            height: self.height,
            width: self.width,
            pixels: self.pixels.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
