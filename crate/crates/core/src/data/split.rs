//! Split-MNIST task construction and task caching.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::{CacheContainer, CacheError};
use super::idx::{read_idx_file, Idx};
use super::{augment_dataset, AugmentParams, DataError, ImageSet, MNIST_CLASSES};

/// The standard MNIST train and test partitions.
#[derive(Debug, Clone)]
pub struct MnistSplits {
    pub train: ImageSet,
    pub test: ImageSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Original digit labels per task, in task order.
    pub splits: Vec<Vec<u8>>,
    /// Applied to the training partition only; `None` disables augmentation.
    pub augment: Option<AugmentParams>,
    /// Caps the number of training samples per task (first `n` in file order).
    pub subsample: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            splits: vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]],
            augment: Some(AugmentParams::default()),
            subsample: None,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.splits.is_empty() {
            return Err(DataError::Config("at least one task split is required".into()));
        }
        let mut seen = BTreeSet::new();
        for (k, classes) in self.splits.iter().enumerate() {
            if classes.is_empty() {
                return Err(DataError::Config(format!("task {} has no classes", k + 1)));
            }
            for &c in classes {
                if c >= MNIST_CLASSES {
                    return Err(DataError::Config(format!("class {c} outside [0, 9]")));
                }
                if !seen.insert(c) {
                    return Err(DataError::Config(format!(
                        "class {c} appears in more than one task split"
                    )));
                }
            }
        }
        if self.subsample == Some(0) {
            return Err(DataError::Config("subsample must be positive".into()));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// One task of a task-incremental benchmark.
///
/// `train` and `val` keep the original digit labels; the `*_targets` vectors
/// hold each sample's index within `class_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    pub class_ids: Vec<u8>,
    pub train: ImageSet,
    pub val: ImageSet,
    train_targets: Vec<usize>,
    val_targets: Vec<usize>,
}

impl TaskDataset {
    pub fn new(task_id: usize, class_ids: Vec<u8>, train: ImageSet, val: ImageSet) -> Result<Self, DataError> {
        if task_id == 0 {
            return Err(DataError::Config("task ids start at 1".into()));
        }
        let remap = |set: &ImageSet| -> Result<Vec<usize>, DataError> {
            set.labels()
                .iter()
                .map(|l| {
                    class_ids.iter().position(|c| c == l).ok_or_else(|| {
                        DataError::Inconsistent(format!("label {l} not among task classes {class_ids:?}"))
                    })
                })
                .collect()
        };
        let train_targets = remap(&train)?;
        let val_targets = remap(&val)?;
        Ok(Self {
            task_id,
            class_ids,
            train,
            val,
            train_targets,
            val_targets,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn train_targets(&self) -> &[usize] {
        &self.train_targets
    }

    pub fn val_targets(&self) -> &[usize] {
        &self.val_targets
    }

    pub fn input_dim(&self) -> usize {
        self.train.pixels().cols()
    }
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf, DataError> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&candidate);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(DataError::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (plain or .gz)"),
    ))
}

fn load_pair(dir: &Path, prefix: &str) -> Result<ImageSet, DataError> {
    let images = read_idx_file(&locate(dir, &format!("{prefix}-images-idx3-ubyte"))?)?;
    let labels = read_idx_file(&locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?)?;
    match (images, labels) {
        (Idx::Images { height, width, pixels }, Idx::Labels(labels)) => ImageSet::new(height, width, pixels, labels),
        _ => Err(DataError::Inconsistent(format!(
            "{prefix}: image/label files swapped or wrong kind"
        ))),
    }
}

/// Loads `train-*` and `t10k-*` IDX files (optionally gzipped) from `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<MnistSplits, DataError> {
    Ok(MnistSplits {
        train: load_pair(dir, "train")?,
        test: load_pair(dir, "t10k")?,
    })
}

/// Builds one [`TaskDataset`] per class list. Training images are augmented
/// once (before filtering, so each image's transform depends only on its
/// position in the MNIST training file); validation comes from the untouched
/// test partition.
pub fn build_split_mnist(full: MnistSplits, config: &SplitConfig) -> Result<Vec<TaskDataset>, DataError> {
    config.validate()?;
    let MnistSplits { train, test } = full;
    let train = match &config.augment {
        Some(params) => augment_dataset(train, params)?,
        None => train,
    };
    config
        .splits
        .iter()
        .enumerate()
        .map(|(k, classes)| {
            let mut train_idx: Vec<usize> = (0..train.len())
                .filter(|&i| classes.contains(&train.labels()[i]))
                .collect();
            if let Some(n) = config.subsample {
                train_idx.truncate(n);
            }
            let val_idx: Vec<usize> = (0..test.len())
                .filter(|&i| classes.contains(&test.labels()[i]))
                .collect();
            TaskDataset::new(k + 1, classes.clone(), train.select(&train_idx), test.select(&val_idx))
        })
        .collect()
}

/// Provenance stored alongside cached tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub data_seed: u64,
    pub augmented: bool,
    pub subsample: Option<usize>,
}

fn put_set(c: &mut CacheContainer, prefix: &str, set: &ImageSet) {
    c.put_matrix(format!("{prefix}.pixels"), set.pixels());
    c.put(
        format!("{prefix}.labels"),
        set.labels().iter().map(|&l| f64::from(l)).collect(),
    );
}

fn get_set(c: &CacheContainer, prefix: &str, height: usize, width: usize) -> Result<ImageSet, DataError> {
    let pixels = c.matrix(&format!("{prefix}.pixels"))?;
    let labels = c.get(&format!("{prefix}.labels"))?.iter().map(|&l| l as u8).collect();
    ImageSet::new(height, width, pixels, labels)
}

pub fn tasks_to_container(tasks: &[TaskDataset], meta: &DatasetMeta) -> CacheContainer {
    let mut c = CacheContainer::new();
    c.put(
        "meta",
        vec![
            tasks.len() as f64,
            (meta.data_seed >> 32) as f64,
            (meta.data_seed & 0xFFFF_FFFF) as f64,
            if meta.augmented { 1.0 } else { 0.0 },
            meta.subsample.map_or(-1.0, |n| n as f64),
        ],
    );
    for (k, t) in tasks.iter().enumerate() {
        let mut head = vec![t.task_id as f64, t.train.height() as f64, t.train.width() as f64];
        head.extend(t.class_ids.iter().map(|&c| f64::from(c)));
        c.put(format!("task.{k}.classes"), head);
        put_set(&mut c, &format!("task.{k}.train"), &t.train);
        put_set(&mut c, &format!("task.{k}.val"), &t.val);
    }
    c
}

pub fn tasks_from_container(c: &CacheContainer) -> Result<(Vec<TaskDataset>, DatasetMeta), DataError> {
    let meta = c.get("meta")?;
    if meta.len() != 5 {
        return Err(CacheError::Malformed("meta section has unexpected length".into()).into());
    }
    let n = meta[0] as usize;
    let data_seed = ((meta[1] as u64) << 32) | (meta[2] as u64);
    let info = DatasetMeta {
        data_seed,
        augmented: meta[3] != 0.0,
        subsample: (meta[4] >= 0.0).then_some(meta[4] as usize),
    };
    let tasks = (0..n)
        .map(|k| {
            let head = c.get(&format!("task.{k}.classes"))?;
            if head.len() < 3 {
                return Err(CacheError::Malformed(format!("task {k} header too short")).into());
            }
            let (task_id, h, w) = (head[0] as usize, head[1] as usize, head[2] as usize);
            let classes = head[3..].iter().map(|&c| c as u8).collect();
            let train = get_set(c, &format!("task.{k}.train"), h, w)?;
            let val = get_set(c, &format!("task.{k}.val"), h, w)?;
            TaskDataset::new(task_id, classes, train, val)
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Ok((tasks, info))
}

pub fn save_tasks(tasks: &[TaskDataset], meta: &DatasetMeta, path: &Path) -> Result<(), DataError> {
    tasks_to_container(tasks, meta).write(path)?;
    Ok(())
}

pub fn load_tasks(path: &Path) -> Result<(Vec<TaskDataset>, DatasetMeta), DataError> {
    tasks_from_container(&CacheContainer::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn toy(labels: &[u8]) -> ImageSet {
        let n = labels.len();
        let pixels = Matrix::from_fn(n, 4, |i, j| ((i + j) % 5) as f64 / 4.0);
        ImageSet::new(2, 2, pixels, labels.to_vec()).unwrap()
    }

    fn toy_mnist() -> MnistSplits {
        MnistSplits {
            train: toy(&[0, 5, 1, 7, 3, 9, 4, 2, 8, 6, 7, 3]),
            test: toy(&[9, 0, 3, 7, 5]),
        }
    }

    #[test]
    fn default_splits_partition_classes() {
        let cfg = SplitConfig {
            augment: None,
            ..Default::default()
        };
        let tasks = build_split_mnist(toy_mnist(), &cfg).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].train.labels(), &[0, 1, 3, 4, 2, 3]);
        assert_eq!(tasks[0].train_targets(), &[0, 1, 3, 4, 2, 3]);
        assert_eq!(tasks[1].train.labels(), &[5, 7, 9, 8, 6, 7]);
        assert_eq!(tasks[1].train_targets(), &[0, 2, 4, 3, 1, 2]);
        assert_eq!(tasks[1].val.labels(), &[9, 7, 5]);
    }

    #[test]
    fn one_class_tasks_remap_to_zero() {
        let cfg = SplitConfig {
            splits: vec![vec![7], vec![3]],
            augment: None,
            subsample: None,
        };
        let tasks = build_split_mnist(toy_mnist(), &cfg).unwrap();
        assert!(tasks.iter().all(|t| t.train_targets().iter().all(|&y| y == 0)));
        assert_eq!(tasks[0].train.len(), 2);
        assert_eq!(tasks[1].val.labels(), &[3]);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let cfg = SplitConfig {
            splits: vec![vec![0, 1], vec![1, 2]],
            ..Default::default()
        };
        assert!(matches!(
            build_split_mnist(toy_mnist(), &cfg),
            Err(DataError::Config(_))
        ));
    }

    #[test]
    fn augmentation_touches_train_only() {
        let cfg = SplitConfig::default();
        let plain = build_split_mnist(
            toy_mnist(),
            &SplitConfig {
                augment: None,
                ..cfg.clone()
            },
        )
        .unwrap();
        let aug = build_split_mnist(toy_mnist(), &cfg).unwrap();
        assert_eq!(plain[0].val, aug[0].val);
        assert_ne!(plain[0].train.pixels(), aug[0].train.pixels());
    }

    #[test]
    fn subsample_caps_train_only() {
        let cfg = SplitConfig {
            augment: None,
            subsample: Some(2),
            ..Default::default()
        };
        let tasks = build_split_mnist(toy_mnist(), &cfg).unwrap();
        assert_eq!(tasks[0].train.len(), 2);
        assert_eq!(tasks[0].val.len(), 2);
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let tasks = build_split_mnist(toy_mnist(), &SplitConfig::default()).unwrap();
        let meta = DatasetMeta {
            data_seed: 0xDEAD_BEEF_0123_4567,
            augmented: true,
            subsample: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.rdac");
        save_tasks(&tasks, &meta, &path).unwrap();
        let (back, back_meta) = load_tasks(&path).unwrap();
        assert_eq!(back, tasks);
        assert_eq!(back_meta, meta);

        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_tasks(&path),
            Err(DataError::Cache(CacheError::Checksum(_)))
        ));
    }
}
