use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{build_split_mnist, load_mnist_dir, load_tasks, save_tasks, DatasetMeta, SplitConfig, TaskDataset};
use crate::decomposition::CaseThresholds;
use crate::ewc::lambda_grid;
use crate::linalg::DEFAULT_RANK_TOL;
use crate::model::{ThreeLayerDims, DEFAULT_LR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Hidden-layer gradients filtered by `A = α·CCᵀ + β·NNᵀ`.
    GradientDecomposition,
    Ewc,
    /// Plain SGD.
    None,
    /// Hidden layer fixed after task 1; only new readouts train.
    FreezeBackbone,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GradientDecomposition => "gradient_decomposition",
            Method::Ewc => "ewc",
            Method::None => "none",
            Method::FreezeBackbone => "freeze_backbone",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Weight initialisation.
    pub init: u64,
    /// Augmentation of the training images.
    pub data: u64,
    /// Per-epoch mini-batch order.
    pub shuffle: u64,
}

/// One experiment. Every field has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epochs_per_task: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Width of the shared hidden layer of the linear network.
    pub hidden: usize,
    pub seeds: Seeds,
    /// RDAC task cache written by `rdac data prepare`.
    pub dataset_cache: Option<PathBuf>,
    /// Raw MNIST IDX directory, used to build (and write) the cache when it
    /// does not exist yet.
    pub mnist_dir: Option<PathBuf>,
    /// Per-task cap on training samples.
    pub subsample: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Use the three-hidden-layer network on synthetic tasks.
    pub three_layer: bool,
    pub three_layer_dims: ThreeLayerDims,
    pub toy_train_samples: usize,
    pub toy_val_samples: usize,
    /// Recompute the three-layer error projector every `k` steps.
    pub recompute_every: usize,
    pub rank_tol: f64,
    pub thresholds: CaseThresholds,
    /// Write measured wall-clock seconds to the metrics CSV. Off by default
    /// so identical configs give byte-identical CSV files.
    pub record_wallclock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::None,
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.0,
            epochs_per_task: 30,
            lr: DEFAULT_LR,
            batch_size: 16,
            hidden: 11,
            seeds: Seeds::default(),
            dataset_cache: None,
            mnist_dir: None,
            subsample: None,
            output_dir: None,
            three_layer: false,
            three_layer_dims: ThreeLayerDims {
                input: 12,
                hidden: [10, 10, 10],
                outputs: vec![2, 8],
            },
            toy_train_samples: 256,
            toy_val_samples: 128,
            recompute_every: 1,
            rank_tol: DEFAULT_RANK_TOL,
            thresholds: CaseThresholds::default(),
            record_wallclock: false,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), HarnessError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        unit_interval("alpha", self.alpha)?;
        unit_interval("beta", self.beta)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(HarnessError::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(HarnessError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs_per_task == 0 || self.hidden == 0 || self.recompute_every == 0 {
            return Err(HarnessError::Config(
                "batch_size, epochs_per_task, hidden and recompute_every must be positive".into(),
            ));
        }
        if self.subsample == Some(0) {
            return Err(HarnessError::Config("subsample must be positive".into()));
        }
        if !(self.rank_tol.is_finite() && self.rank_tol > 0.0) {
            return Err(HarnessError::Config(format!(
                "rank_tol must be positive, got {}",
                self.rank_tol
            )));
        }
        let t = &self.thresholds;
        if !(t.clamp_fraction > 0.0 && t.eps_stability >= 0.0 && t.eps_plasticity >= 0.0) {
            return Err(HarnessError::Config(
                "case thresholds must be non-negative with a positive clamp fraction".into(),
            ));
        }
        if self.three_layer {
            if !matches!(self.method, Method::GradientDecomposition | Method::None) {
                return Err(HarnessError::Config(format!(
                    "method {} is not available for the three-layer network",
                    self.method.as_str()
                )));
            }
            if self.three_layer_dims.outputs.len() < 2 {
                return Err(HarnessError::Config(
                    "the three-layer protocol needs at least two tasks".into(),
                ));
            }
            if self.toy_train_samples == 0 || self.toy_val_samples == 0 {
                return Err(HarnessError::Config("toy sample counts must be positive".into()));
            }
        } else if self.dataset_cache.is_none() && self.mnist_dir.is_none() {
            return Err(HarnessError::Config(
                "either dataset_cache or mnist_dir is required".into(),
            ));
        }
        Ok(())
    }

    /// The same run with plain SGD; used as the classification baseline.
    pub fn baseline(&self) -> RunConfig {
        RunConfig {
            method: Method::None,
            alpha: 1.0,
            beta: 1.0,
            lambda: 0.0,
            output_dir: None,
            ..self.clone()
        }
    }
}

/// Loads split-MNIST tasks for a config. An existing cache is used as is
/// (after checking its data seed); otherwise the tasks are built from
/// `mnist_dir` and written to `dataset_cache` if one is named.
pub fn load_task_data(cfg: &RunConfig) -> Result<Vec<TaskDataset>, HarnessError> {
    let (mut tasks, meta) = match &cfg.dataset_cache {
        Some(path) if path.exists() => load_tasks(path)?,
        cache => {
            let dir = cfg.mnist_dir.as_ref().ok_or_else(|| {
                HarnessError::Config(format!(
                    "dataset cache {} does not exist and no mnist_dir was given",
                    cache.as_ref().map_or("<none>".into(), |p| p.display().to_string())
                ))
            })?;
            let split = SplitConfig {
                augment: Some(crate::data::AugmentParams {
                    seed: cfg.seeds.data,
                    ..Default::default()
                }),
                subsample: cfg.subsample,
                ..Default::default()
            };
            let tasks = build_split_mnist(load_mnist_dir(dir)?, &split)?;
            let meta = DatasetMeta {
                data_seed: cfg.seeds.data,
                augmented: true,
                subsample: cfg.subsample,
            };
            if let Some(path) = cache {
                save_tasks(&tasks, &meta, path)?;
            }
            (tasks, meta)
        }
    };
    if meta.augmented && meta.data_seed != cfg.seeds.data {
        return Err(HarnessError::Config(format!(
            "dataset cache was prepared with data seed {} but the config asks for {}",
            meta.data_seed, cfg.seeds.data
        )));
    }
    if let Some(n) = cfg.subsample {
        if let Some(m) = meta.subsample {
            if n > m {
                return Err(HarnessError::Config(format!(
                    "subsample {n} exceeds the {m} samples per task held by the cache"
                )));
            }
        }
        for t in &mut tasks {
            if t.train.len() > n {
                let keep: Vec<usize> = (0..n).collect();
                *t = TaskDataset::new(t.task_id, t.class_ids.clone(), t.train.select(&keep), t.val.clone())?;
            }
        }
    }
    if tasks.len() < 2 {
        return Err(HarnessError::Config(
            "the continual protocol needs at least two tasks".into(),
        ));
    }
    Ok(tasks)
}

/// Values along one sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Values(Vec<f64>),
    /// `n` evenly spaced values from `start` to `stop` inclusive.
    Linspace {
        linspace: (f64, f64, usize),
    },
    /// `{0}` plus `n − 1` log-spaced values from 1e-3 to 1e5.
    LambdaGrid {
        lambda_grid: usize,
    },
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AxisSpec::Values(v) => v.clone(),
            AxisSpec::Linspace { linspace: (a, b, n) } => match n {
                0 => vec![],
                1 => vec![*a],
                n => (0..*n).map(|k| a + (b - a) * k as f64 / (*n - 1) as f64).collect(),
            },
            AxisSpec::LambdaGrid { lambda_grid: n } => lambda_grid(*n),
        }
    }
}

/// Sweep axes; absent axes keep the base config's value. Points are
/// enumerated alpha-major, then beta, then lambda.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub alpha: Option<AxisSpec>,
    pub beta: Option<AxisSpec>,
    pub lambda: Option<AxisSpec>,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("grid spec: {e}")))
    }

    /// The 33 × 33 α/β grid.
    pub fn full_alpha_beta() -> Self {
        let axis = AxisSpec::Linspace {
            linspace: (0.0, 1.0, 33),
        };
        GridSpec {
            alpha: Some(axis.clone()),
            beta: Some(axis),
            lambda: None,
        }
    }

    pub fn points(&self, base: &RunConfig) -> Result<Vec<RunConfig>, HarnessError> {
        let axis = |a: &Option<AxisSpec>, default: f64| a.as_ref().map_or(vec![default], AxisSpec::values);
        if (self.alpha.is_some() || self.beta.is_some()) && base.method != Method::GradientDecomposition {
            return Err(HarnessError::Config(
                "alpha/beta axes require method gradient_decomposition".into(),
            ));
        }
        if self.lambda.is_some() && base.method != Method::Ewc {
            return Err(HarnessError::Config("a lambda axis requires method ewc".into()));
        }
        let mut out = Vec::new();
        for &alpha in &axis(&self.alpha, base.alpha) {
            for &beta in &axis(&self.beta, base.beta) {
                for &lambda in &axis(&self.lambda, base.lambda) {
                    let cfg = RunConfig {
                        alpha,
                        beta,
                        lambda,
                        ..base.clone()
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}
