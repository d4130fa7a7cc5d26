use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{metrics_csv, write_json};
use super::train::{evaluate, train_task, EpochLog, TrainMode};
use super::{load_task_data, HarnessError, Method, RunConfig};
use crate::data::TaskDataset;
use crate::decomposition::{
    classify_case, displacement, stacked_decomposition, CaseInputs, CaseLabel, DisplacementRecord, ProjectionSpec,
    ReadoutDecomposition,
};
use crate::ewc::{fisher_diag, EwcState};
use crate::linalg::Matrix;
use crate::model::{LinearDims, LinearNet, TaskNetwork};
use crate::write_atomic;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The case label could not be computed; metrics are still valid.
    Unclassified {
        reason: String,
    },
}

/// Outcome of one continual-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub config: RunConfig,
    /// Task-1 validation accuracy after all training.
    pub stability: f64,
    /// Last task's validation accuracy after all training.
    pub plasticity: f64,
    pub capacity: f64,
    /// Task-1 validation accuracy right after task 1.
    pub task1_accuracy_after_task1: f64,
    pub stability_drop: f64,
    /// Plasticity of the plain-SGD run with the same seeds.
    pub baseline_plasticity: f64,
    pub plasticity_drop: f64,
    /// Largest absolute change of any task-1 logit on task-1 validation
    /// inputs between the end of task 1 and the end of training.
    pub task1_logit_drift: f64,
    pub displacement: DisplacementRecord,
    /// Plain-SGD displacement used for the clamping thresholds.
    pub baseline_displacement: DisplacementRecord,
    pub case: Option<CaseLabel>,
    pub status: RunStatus,
    /// Smallest admissible error dimension seen (three-layer runs only).
    pub min_admissible_dim: Option<usize>,
    pub curves: Vec<EpochLog>,
    pub wallclock_s: f64,
}

impl RunRecord {
    /// Builds a record from the raw measurements, filling in derived
    /// quantities and the case label.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        config: &RunConfig,
        stability: f64,
        plasticity: f64,
        task1_accuracy_after_task1: f64,
        task1_logit_drift: f64,
        disp: DisplacementRecord,
        baseline: Option<(&DisplacementRecord, f64)>,
        curves: Vec<EpochLog>,
        start: Instant,
    ) -> RunRecord {
        let (baseline_displacement, baseline_plasticity) = match baseline {
            Some((d, p)) => (d.clone(), p),
            None => (disp.clone(), plasticity),
        };
        let stability_drop = task1_accuracy_after_task1 - stability;
        let plasticity_drop = baseline_plasticity - plasticity;
        let inputs = CaseInputs {
            stability_drop,
            plasticity_drop,
            range_disp: disp.d_range.mean,
            null_disp: disp.d_null.mean,
        };
        let (case, status) = match classify_case(&inputs, &baseline_displacement, &config.thresholds) {
            Ok(c) => (Some(c), RunStatus::Complete),
            Err(e) => (None, RunStatus::Unclassified { reason: e.to_string() }),
        };
        RunRecord {
            format_version: RECORD_VERSION,
            config: config.clone(),
            stability,
            plasticity,
            capacity: stability + plasticity,
            task1_accuracy_after_task1,
            stability_drop,
            baseline_plasticity,
            plasticity_drop,
            task1_logit_drift,
            displacement: disp,
            baseline_displacement,
            case,
            status,
            min_admissible_dim: None,
            curves,
            wallclock_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// Loads the tasks, runs the configured protocol (plus the plain-SGD
/// baseline when needed) and persists the record to `output_dir`. On
/// failure a `PARTIAL.json` marker naming the failed stage is written
/// instead.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let result = if cfg.three_layer {
        super::three_layer::run_three_layer(cfg)
    } else {
        load_task_data(cfg)
            .map_err(|e| e.at("load data"))
            .and_then(|tasks| run_experiment_with(cfg, &tasks, None))
    };
    if let Some(dir) = &cfg.output_dir {
        match &result {
            Ok(record) => persist_record(dir, record)?,
            Err(e) => {
                let marker = serde_json::json!({
                    "status": "partial",
                    "error": e.to_string(),
                    "config": cfg,
                });
                write_json(&dir.join("PARTIAL.json"), &marker)?;
            }
        }
    }
    result
}

pub(crate) fn persist_record(dir: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    write_json(&dir.join("run.json"), record)?;
    let csv = metrics_csv(std::slice::from_ref(record));
    let path = dir.join("metrics.csv");
    write_atomic(&path, csv.as_bytes()).map_err(|e| HarnessError::io(&path, e))
}

struct LinearOutcome {
    record_parts: (f64, f64, f64, f64),
    disp: DisplacementRecord,
    curves: Vec<EpochLog>,
}

/// The continual protocol on already loaded tasks. `baseline` is the
/// plain-SGD record with the same seeds; it is computed when absent and the
/// method is not already plain SGD.
pub fn run_experiment_with(
    cfg: &RunConfig,
    tasks: &[TaskDataset],
    baseline: Option<&RunRecord>,
) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let computed;
    let baseline = match (baseline, cfg.method) {
        (Some(b), _) => Some(b),
        (None, Method::None) => None,
        (None, _) => {
            computed = run_experiment_with(&cfg.baseline(), tasks, None).map_err(|e| e.at("baseline run"))?;
            Some(&computed)
        }
    };
    let out = run_linear(cfg, tasks)?;
    let (stability, plasticity, acc1, drift) = out.record_parts;
    Ok(RunRecord::assemble(
        cfg,
        stability,
        plasticity,
        acc1,
        drift,
        out.disp,
        baseline.map(|b| (&b.displacement, b.plasticity)),
        out.curves,
        start,
    ))
}

fn run_linear(cfg: &RunConfig, tasks: &[TaskDataset]) -> Result<LinearOutcome, HarnessError> {
    if tasks.len() < 2 {
        return Err(HarnessError::Config(
            "the continual protocol needs at least two tasks".into(),
        ));
    }
    let dims = LinearDims {
        input: tasks[0].input_dim(),
        hidden: cfg.hidden,
        outputs: tasks.iter().map(TaskDataset::num_classes).collect(),
    };
    let mut net = LinearNet::init(&dims, cfg.seeds.init)?;
    let first = &tasks[0];
    let mut curves = train_task(&mut net, first, cfg, TrainMode::Plain, &[first]).map_err(|e| e.at("task 1"))?;
    let acc1 = evaluate(&net, first)?;
    let val1 = first.val.pixels();
    let snapshot = net.forward(val1, first.task_id)?;
    let decomp1 = ReadoutDecomposition::new(net.readout(first.task_id)?, cfg.rank_tol)?;
    let mut ewc_states: Vec<EwcState> = Vec::new();
    for k in 1..tasks.len() {
        let prev = &tasks[k - 1];
        net.freeze(prev.task_id)?;
        if cfg.method == Method::Ewc {
            let fisher = fisher_diag(&net, prev, cfg.batch_size)?;
            ewc_states.push(EwcState::new(fisher, net.w_h().clone(), cfg.lambda)?);
        }
        let spec;
        let mode = match cfg.method {
            Method::None => TrainMode::Plain,
            Method::FreezeBackbone => TrainMode::FrozenBackbone,
            Method::Ewc => TrainMode::Ewc(&ewc_states),
            Method::GradientDecomposition => {
                let frozen: Vec<&Matrix> = tasks[..k]
                    .iter()
                    .map(|t| net.readout(t.task_id))
                    .collect::<Result<_, _>>()?;
                let decomp = if k == 1 {
                    decomp1.clone()
                } else {
                    stacked_decomposition(&frozen)?
                };
                spec = ProjectionSpec::new(cfg.alpha, cfg.beta, &decomp)?;
                TrainMode::Projected(&spec)
            }
        };
        let seen: Vec<&TaskDataset> = tasks[..=k].iter().collect();
        let stage = if k == 1 { "task 2" } else { "later task" };
        curves.extend(train_task(&mut net, &tasks[k], cfg, mode, &seen).map_err(|e| e.at(stage))?);
    }
    let after = net.forward(val1, first.task_id)?;
    let drift = after.logits.sub(&snapshot.logits)?.max_abs();
    let disp = displacement(&snapshot.hidden, &after.hidden, &decomp1)?;
    let stability = evaluate(&net, first)?;
    let plasticity = evaluate(&net, tasks.last().expect("at least two tasks"))?;
    Ok(LinearOutcome {
        record_parts: (stability, plasticity, acc1, drift),
        disp,
        curves,
    })
}
