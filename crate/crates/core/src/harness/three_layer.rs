//! The continual protocol for the three-hidden-layer network on synthetic
//! teacher-labelled tasks.

use std::time::Instant;

use super::train::{epoch_order, EpochLog};
use super::{HarnessError, Method, RunConfig, RunRecord};
use crate::decomposition::{displacement, ErrorProjector, ReadoutDecomposition};
use crate::linalg::{gemm_nt, Matrix};
use crate::model::{
    accuracy, argmax_rows, grads_three_layer, softmax_ce, Batch, TaskNetwork, ThreeLayerDims, ThreeLayerNet,
};
use crate::rng::{substream, uniform};

/// Inputs uniform in `[-1, 1]`, labelled by the argmax of a random linear
/// teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub task_id: usize,
    pub train_x: Matrix,
    pub train_y: Vec<usize>,
    pub val_x: Matrix,
    pub val_y: Vec<usize>,
}

pub fn synthetic_tasks(dims: &ThreeLayerDims, n_train: usize, n_val: usize, seed: u64) -> Vec<ToyTask> {
    dims.outputs
        .iter()
        .enumerate()
        .map(|(k, &o)| {
            let mut rng = substream(seed, k as u64);
            let teacher = Matrix::from_fn(o, dims.input, |_, _| uniform(&mut rng, -1.0, 1.0));
            let mut sample = |n: usize| {
                let x = Matrix::from_fn(n, dims.input, |_, _| uniform(&mut rng, -1.0, 1.0));
                let y = argmax_rows(&gemm_nt(&x, &teacher).expect("teacher matches input width"));
                (x, y)
            };
            let (train_x, train_y) = sample(n_train);
            let (val_x, val_y) = sample(n_val);
            ToyTask {
                task_id: k + 1,
                train_x,
                train_y,
                val_x,
                val_y,
            }
        })
        .collect()
}

fn evaluate(net: &ThreeLayerNet, t: &ToyTask) -> Result<f64, HarnessError> {
    Ok(accuracy(&net.forward(&t.val_x, t.task_id)?.logits, &t.val_y))
}

/// Trains `task`; with `protect = Some(old)` every output error is
/// projected so that readout `old` sees no change. Returns the epoch logs
/// and the smallest admissible error dimension met.
fn train_toy(
    net: &mut ThreeLayerNet,
    task: &ToyTask,
    cfg: &RunConfig,
    protect: Option<usize>,
    seen: &[&ToyTask],
) -> Result<(Vec<EpochLog>, Option<usize>), HarnessError> {
    let n = task.train_y.len();
    let mut logs = Vec::new();
    let mut min_dim: Option<usize> = None;
    let mut projector: Option<ErrorProjector> = None;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs_per_task {
        let order = epoch_order(cfg.seeds.shuffle, task.task_id, epoch, n);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::new(
                task.train_x.select_rows(chunk),
                chunk.iter().map(|&i| task.train_y[i]).collect(),
                task.task_id,
            )?;
            let g = match protect {
                None => grads_three_layer(net, &batch, None)?,
                Some(old) => {
                    if step.is_multiple_of(cfg.recompute_every) || projector.is_none() {
                        let p = ErrorProjector::new(net, old, task.task_id)?;
                        min_dim = Some(min_dim.map_or(p.admissible_dim, |m| m.min(p.admissible_dim)));
                        projector = Some(p);
                    }
                    let logits = net.forward(&batch.inputs, task.task_id)?.logits;
                    let (_, e) = softmax_ce(&logits, &batch.labels)?;
                    let e = projector.as_ref().expect("projector set above").apply(&e)?;
                    grads_three_layer(net, &batch, Some(&e))?
                }
            };
            if !g.loss.is_finite() {
                return Err(HarnessError::Numerical(format!(
                    "loss diverged on toy task {}",
                    task.task_id
                )));
            }
            net.sgd_step(&g, cfg.lr)?;
            loss_sum += g.loss;
            steps += 1;
            step += 1;
        }
        logs.push(EpochLog {
            task_id: task.task_id,
            epoch,
            train_loss: loss_sum / steps as f64,
            val_accuracy: seen.iter().map(|t| evaluate(net, t)).collect::<Result<_, _>>()?,
        });
    }
    Ok((logs, min_dim))
}

/// Two-task run of the three-layer network. With method
/// `gradient_decomposition` the task-2 output errors are projected onto
/// the common null space of the three interaction constraints.
pub fn run_three_layer(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    if cfg.three_layer_dims.outputs.len() != 2 {
        return Err(HarnessError::Config(
            "the three-layer protocol supports exactly two tasks".into(),
        ));
    }
    let start = Instant::now();
    let baseline = match cfg.method {
        Method::None => None,
        _ => Some(run_three_layer(&cfg.baseline()).map_err(|e| e.at("baseline run"))?),
    };
    let tasks = synthetic_tasks(
        &cfg.three_layer_dims,
        cfg.toy_train_samples,
        cfg.toy_val_samples,
        cfg.seeds.data,
    );
    let (t1, t2) = (&tasks[0], &tasks[1]);
    let mut net = ThreeLayerNet::init(&cfg.three_layer_dims, cfg.seeds.init)?;
    let (mut curves, _) = train_toy(&mut net, t1, cfg, None, &[t1]).map_err(|e| e.at("task 1"))?;
    let acc1 = evaluate(&net, t1)?;
    net.freeze(1)?;
    let snapshot = net.forward(&t1.val_x, 1)?;
    let decomp = ReadoutDecomposition::new(net.readout(1)?, cfg.rank_tol)?;
    let protect = (cfg.method == Method::GradientDecomposition).then_some(1);
    let (more, min_dim) = train_toy(&mut net, t2, cfg, protect, &[t1, t2]).map_err(|e| e.at("task 2"))?;
    curves.extend(more);
    let after = net.forward(&t1.val_x, 1)?;
    let drift = after.logits.sub(&snapshot.logits)?.max_abs();
    let disp = displacement(&snapshot.hidden, &after.hidden, &decomp)?;
    let mut record = RunRecord::assemble(
        cfg,
        evaluate(&net, t1)?,
        evaluate(&net, t2)?,
        acc1,
        drift,
        disp,
        baseline.as_ref().map(|b| (&b.displacement, b.plasticity)),
        curves,
        start,
    );
    record.min_admissible_dim = min_dim;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(method: Method) -> RunConfig {
        RunConfig {
            method,
            three_layer: true,
            epochs_per_task: 5,
            lr: 0.05,
            toy_train_samples: 64,
            toy_val_samples: 32,
            ..Default::default()
        }
    }

    #[test]
    fn teacher_labels_are_deterministic_and_in_range() {
        let dims = cfg(Method::None).three_layer_dims;
        let a = synthetic_tasks(&dims, 20, 10, 3);
        assert_eq!(a, synthetic_tasks(&dims, 20, 10, 3));
        assert!(a[1].train_y.iter().all(|&y| y < 8));
        assert_ne!(a, synthetic_tasks(&dims, 20, 10, 4));
    }

    #[test]
    fn projected_run_keeps_task_one_outputs() {
        let r = run_three_layer(&cfg(Method::GradientDecomposition)).unwrap();
        assert!(r.task1_logit_drift <= 1e-9, "drift {}", r.task1_logit_drift);
        assert_eq!(r.min_admissible_dim, Some(2));
        let plain = run_three_layer(&cfg(Method::None)).unwrap();
        assert!(plain.task1_logit_drift > 1e-3);
        assert_eq!(r.baseline_plasticity, plain.plasticity);
    }

    #[test]
    fn other_methods_rejected() {
        assert!(run_three_layer(&cfg(Method::Ewc)).is_err());
    }
}
