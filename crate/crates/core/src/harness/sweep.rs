use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use super::report::{emit_table, write_json};
use super::{
    load_task_data, run_experiment_with, run_three_layer, GridSpec, HarnessError, Method, RunConfig, RunRecord,
};
use crate::data::TaskDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub config: RunConfig,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub base: RunConfig,
    pub grid: GridSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.record.is_none()).count()
    }

    pub fn records(&self) -> Vec<RunRecord> {
        self.rows.iter().filter_map(|r| r.record.clone()).collect()
    }
}

/// Loads the data once, runs every grid point on up to `workers` threads
/// and writes the table into `base.output_dir` when it is set. Failed
/// points are kept as rows with an error; check [`SweepTable::failed`].
pub fn sweep_grid(base: &RunConfig, grid: &GridSpec, workers: usize) -> Result<SweepTable, HarnessError> {
    base.validate()?;
    let tasks = if base.three_layer {
        Vec::new()
    } else {
        load_task_data(base).map_err(|e| e.at("load data"))?
    };
    let table = sweep_grid_with(base, grid, &tasks, workers)?;
    if let Some(dir) = &base.output_dir {
        write_json(&dir.join("sweep.json"), &table)?;
        emit_table(&table, dir)?;
    }
    Ok(table)
}

/// [`sweep_grid`] on already loaded tasks, without persisting anything.
pub fn sweep_grid_with(
    base: &RunConfig,
    grid: &GridSpec,
    tasks: &[TaskDataset],
    workers: usize,
) -> Result<SweepTable, HarnessError> {
    let points = grid.points(base)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let baseline = if base.three_layer || base.method == Method::None {
        None
    } else {
        Some(run_experiment_with(&base.baseline(), tasks, None).map_err(|e| e.at("baseline run"))?)
    };
    let total = points.len();
    let rows = pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let cfg = RunConfig {
                    output_dir: None,
                    ..cfg
                };
                let result = if cfg.three_layer {
                    run_three_layer(&cfg)
                } else {
                    run_experiment_with(&cfg, tasks, baseline.as_ref())
                };
                let point = SweepPoint {
                    alpha: cfg.alpha,
                    beta: cfg.beta,
                    lambda: cfg.lambda,
                };
                match result {
                    Ok(record) => {
                        log::info!("sweep point {}/{total} done: {point:?}", i + 1);
                        SweepRow {
                            point,
                            config: cfg,
                            record: Some(record),
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::warn!("sweep point {}/{total} failed: {e}", i + 1);
                        SweepRow {
                            point,
                            config: cfg,
                            record: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    Ok(SweepTable {
        base: base.clone(),
        grid: grid.clone(),
        rows,
    })
}
