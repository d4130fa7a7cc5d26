use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{HarnessError, RunConfig};
use crate::data::TaskDataset;
use crate::decomposition::{project_hidden_gradient, ProjectionSpec};
use crate::ewc::{ewc_penalized_grad, EwcState};
use crate::model::{accuracy, grads_linear, Batch, LinearNet, TaskNetwork};
use crate::rng::substream;

/// How the shared-layer gradient is treated while training one task.
#[derive(Debug, Clone, Copy)]
pub enum TrainMode<'a> {
    Plain,
    Projected(&'a ProjectionSpec),
    /// One state per previous task; penalties add up.
    Ewc(&'a [EwcState]),
    /// Only the task readout is updated.
    FrozenBackbone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub task_id: usize,
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Validation accuracy of every task learned so far, by task id order.
    pub val_accuracy: Vec<f64>,
}

/// Sample order for one epoch, drawn from the shuffle seed only so that
/// every method sees the same batches.
pub fn epoch_order(shuffle_seed: u64, task_id: usize, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(shuffle_seed, ((task_id as u64) << 32) | epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Validation accuracy of `net` on `task` through that task's readout.
pub fn evaluate<N: TaskNetwork>(net: &N, task: &TaskDataset) -> Result<f64, HarnessError> {
    let f = net.forward(task.val.pixels(), task.task_id)?;
    Ok(accuracy(&f.logits, task.val_targets()))
}

/// Mini-batch SGD on one task for `cfg.epochs_per_task` epochs. `seen`
/// lists the tasks evaluated after each epoch (normally tasks `1..=k`).
pub fn train_task(
    net: &mut LinearNet,
    task: &TaskDataset,
    cfg: &RunConfig,
    mode: TrainMode<'_>,
    seen: &[&TaskDataset],
) -> Result<Vec<EpochLog>, HarnessError> {
    let n = task.train.len();
    if n == 0 {
        return Err(
            crate::data::DataError::Inconsistent(format!("task {} has no training samples", task.task_id)).into(),
        );
    }
    let pixels = task.train.pixels();
    let targets = task.train_targets();
    let mut logs = Vec::with_capacity(cfg.epochs_per_task);
    for epoch in 0..cfg.epochs_per_task {
        let order = epoch_order(cfg.seeds.shuffle, task.task_id, epoch, n);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::new(
                pixels.select_rows(chunk),
                chunk.iter().map(|&i| targets[i]).collect(),
                task.task_id,
            )?;
            let mut g = grads_linear(net, &batch)?;
            if !g.loss.is_finite() {
                return Err(HarnessError::Numerical(format!(
                    "loss diverged on task {} at epoch {epoch}",
                    task.task_id
                )));
            }
            g.w_h = match mode {
                TrainMode::Plain => g.w_h,
                TrainMode::Projected(spec) => project_hidden_gradient(&g.w_h, spec)?,
                TrainMode::Ewc(states) => {
                    let mut d = g.w_h;
                    for s in states {
                        d = ewc_penalized_grad(&d, s, net.w_h())?;
                    }
                    d
                }
                TrainMode::FrozenBackbone => g.w_h.scale(0.0),
            };
            net.sgd_step(&g, cfg.lr)?;
            loss_sum += g.loss;
            steps += 1;
        }
        let val_accuracy = seen.iter().map(|t| evaluate(net, t)).collect::<Result<Vec<_>, _>>()?;
        log::debug!(
            "task {} epoch {epoch}: loss {:.5}, val {:?}",
            task.task_id,
            loss_sum / steps as f64,
            val_accuracy
        );
        logs.push(EpochLog {
            task_id: task.task_id,
            epoch,
            train_loss: loss_sum / steps as f64,
            val_accuracy,
        });
    }
    if !net.w_h().is_finite() {
        return Err(HarnessError::Numerical(format!(
            "hidden weights became non-finite on task {}",
            task.task_id
        )));
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageSet;
    use crate::decomposition::readout_decomposition;
    use crate::linalg::Matrix;
    use crate::model::{softmax_ce, LinearDims};
    use crate::rng::{seeded, uniform};

    pub(crate) fn toy_task(task_id: usize, n: usize, seed: u64) -> TaskDataset {
        let mut rng = seeded(seed);
        let mut make = |n: usize| {
            let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8 + 2 * (task_id as u8 - 1)).collect();
            let px = Matrix::from_fn(n, 9, |i, j| {
                let signal = if labels[i].is_multiple_of(2) == (j < 4) {
                    0.6
                } else {
                    0.1
                };
                (signal + uniform(&mut rng, 0.0, 0.3)).min(1.0)
            });
            ImageSet::new(3, 3, px, labels).unwrap()
        };
        let classes = vec![2 * (task_id as u8 - 1), 2 * (task_id as u8 - 1) + 1];
        TaskDataset::new(task_id, classes, make(n), make(16)).unwrap()
    }

    fn cfg(epochs: usize) -> RunConfig {
        RunConfig {
            epochs_per_task: epochs,
            lr: 0.5,
            batch_size: 8,
            ..Default::default()
        }
    }

    fn net() -> LinearNet {
        LinearNet::init(
            &LinearDims {
                input: 9,
                hidden: 4,
                outputs: vec![2, 2],
            },
            3,
        )
        .unwrap()
    }

    fn full_loss(net: &LinearNet, t: &TaskDataset) -> f64 {
        let f = net.forward(t.train.pixels(), t.task_id).unwrap();
        softmax_ce(&f.logits, t.train_targets()).unwrap().0
    }

    #[test]
    fn one_epoch_lowers_training_loss() {
        let t = toy_task(1, 32, 1);
        let mut n = net();
        let before = full_loss(&n, &t);
        let logs = train_task(&mut n, &t, &cfg(1), TrainMode::Plain, &[&t]).unwrap();
        assert_eq!(logs.len(), 1);
        assert!(full_loss(&n, &t) < before);
    }

    #[test]
    fn unit_projection_matches_plain_sgd() {
        let t = toy_task(2, 32, 2);
        let d = readout_decomposition(net().readout(1).unwrap()).unwrap();
        let spec = ProjectionSpec::new(1.0, 1.0, &d).unwrap();
        let (mut a, mut b) = (net(), net());
        train_task(&mut a, &t, &cfg(3), TrainMode::Plain, &[]).unwrap();
        train_task(&mut b, &t, &cfg(3), TrainMode::Projected(&spec), &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_projection_freezes_hidden_layer() {
        let t = toy_task(2, 32, 3);
        let d = readout_decomposition(net().readout(1).unwrap()).unwrap();
        let spec = ProjectionSpec::new(0.0, 0.0, &d).unwrap();
        let mut n = net();
        let w0 = n.w_h().clone();
        let r0 = n.readout(2).unwrap().clone();
        train_task(&mut n, &t, &cfg(2), TrainMode::Projected(&spec), &[]).unwrap();
        assert_eq!(n.w_h(), &w0);
        assert_ne!(n.readout(2).unwrap(), &r0);
        let mut f = net();
        train_task(&mut f, &t, &cfg(2), TrainMode::FrozenBackbone, &[]).unwrap();
        assert_eq!(f, n);
    }

    #[test]
    fn null_projection_keeps_prior_logits() {
        let t1 = toy_task(1, 32, 4);
        let t2 = toy_task(2, 32, 5);
        let mut n = net();
        train_task(&mut n, &t1, &cfg(2), TrainMode::Plain, &[]).unwrap();
        n.freeze(1).unwrap();
        let before = n.forward(t1.val.pixels(), 1).unwrap().logits;
        let d = readout_decomposition(n.readout(1).unwrap()).unwrap();
        let spec = ProjectionSpec::new(0.0, 1.0, &d).unwrap();
        train_task(&mut n, &t2, &cfg(5), TrainMode::Projected(&spec), &[&t1, &t2]).unwrap();
        let after = n.forward(t1.val.pixels(), 1).unwrap().logits;
        assert!(after.sub(&before).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn shuffle_depends_only_on_its_inputs() {
        assert_eq!(epoch_order(1, 1, 0, 50), epoch_order(1, 1, 0, 50));
        assert_ne!(epoch_order(1, 1, 0, 50), epoch_order(1, 1, 1, 50));
        assert_ne!(epoch_order(1, 1, 0, 50), epoch_order(1, 2, 0, 50));
        let mut o = epoch_order(9, 2, 3, 50);
        o.sort();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
    }
}
