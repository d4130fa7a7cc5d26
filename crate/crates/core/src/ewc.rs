//! Elastic weight consolidation on the shared hidden layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CacheContainer, CacheError, TaskDataset};
use crate::linalg::{LinalgError, Matrix};
use crate::model::{hidden_gradient, Batch, LinearNet, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EwcError {
    #[error("task {0} has no training samples")]
    EmptyDataset(usize),
    #[error("batch size must be positive")]
    BatchSize,
    #[error("lambda must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Diagonal Fisher `F`, anchor `w*` and strength `λ` for one previous task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    fisher: Matrix,
    anchor: Matrix,
    lambda: f64,
}

impl EwcState {
    pub fn new(fisher: Matrix, anchor: Matrix, lambda: f64) -> Result<Self, EwcError> {
        fisher.check_same_shape(&anchor, "ewc")?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(EwcError::Lambda(lambda));
        }
        if fisher.as_slice().iter().any(|&f| f.is_nan() || f < 0.0) {
            return Err(EwcError::Model(ModelError::Dims(
                "fisher entries must be non-negative".into(),
            )));
        }
        Ok(Self { fisher, anchor, lambda })
    }

    pub fn fisher(&self) -> &Matrix {
        &self.fisher
    }

    pub fn anchor(&self) -> &Matrix {
        &self.anchor
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn to_container(&self, prefix: &str, c: &mut CacheContainer) {
        c.put_matrix(format!("{prefix}.fisher"), &self.fisher);
        c.put_matrix(format!("{prefix}.anchor"), &self.anchor);
        c.put(format!("{prefix}.lambda"), vec![self.lambda]);
    }

    pub fn from_container(prefix: &str, c: &CacheContainer) -> Result<Self, CacheError> {
        let fisher = c.matrix(&format!("{prefix}.fisher"))?;
        let anchor = c.matrix(&format!("{prefix}.anchor"))?;
        let lambda = match c.get(&format!("{prefix}.lambda"))? {
            [l] => *l,
            _ => return Err(CacheError::Malformed(format!("{prefix}.lambda"))),
        };
        Self::new(fisher, anchor, lambda).map_err(|e| CacheError::Malformed(e.to_string()))
    }
}

/// `F = Σ_batches (ΔW_H)² / (N·b)` over the task's training set, batched in
/// index order. The last batch may be short; `b` is the nominal size.
pub fn fisher_diag(net: &LinearNet, task: &TaskDataset, batch_size: usize) -> Result<Matrix, EwcError> {
    if batch_size == 0 {
        return Err(EwcError::BatchSize);
    }
    let n = task.train.len();
    if n == 0 {
        return Err(EwcError::EmptyDataset(task.task_id));
    }
    let targets = task.train_targets();
    let mut acc = Matrix::zeros(net.w_h().rows(), net.w_h().cols());
    let mut batches = 0usize;
    for start in (0..n).step_by(batch_size) {
        let idx: Vec<usize> = (start..(start + batch_size).min(n)).collect();
        let inputs = task.train.pixels().select_rows(&idx);
        let labels = idx.iter().map(|&i| targets[i]).collect();
        let batch = Batch::new(inputs, labels, task.task_id)?;
        let (_, g) = hidden_gradient(net, &batch)?;
        for (a, g) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += g * g;
        }
        batches += 1;
    }
    Ok(acc.scale(1.0 / (batches * batch_size) as f64))
}

/// `d_w_h + λ·F ⊙ (w − w*)`, the gradient of `loss + (λ/2)·Σ F·(w − w*)²`.
pub fn ewc_penalized_grad(d_w_h: &Matrix, state: &EwcState, w_h: &Matrix) -> Result<Matrix, EwcError> {
    d_w_h.check_same_shape(w_h, "ewc gradient")?;
    w_h.check_same_shape(&state.anchor, "ewc anchor")?;
    if state.lambda == 0.0 {
        return Ok(d_w_h.clone());
    }
    let mut out = d_w_h.clone();
    let it = out.as_mut_slice().iter_mut().zip(
        state
            .fisher
            .as_slice()
            .iter()
            .zip(w_h.as_slice().iter().zip(state.anchor.as_slice())),
    );
    for (o, (f, (w, a))) in it {
        *o += state.lambda * f * (w - a);
    }
    Ok(out)
}

/// The penalty `(λ/2)·Σ F·(w − w*)²`.
pub fn penalty(state: &EwcState, w_h: &Matrix) -> Result<f64, EwcError> {
    w_h.check_same_shape(&state.anchor, "ewc penalty")?;
    let s: f64 = state
        .fisher
        .as_slice()
        .iter()
        .zip(w_h.as_slice().iter().zip(state.anchor.as_slice()))
        .map(|(f, (w, a))| f * (w - a) * (w - a))
        .sum();
    Ok(0.5 * state.lambda * s)
}

/// `{0}` followed by `n − 1` log-spaced values from `1e-3` to `1e5`.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![0.0, 1e5],
        _ => {
            let (lo, hi) = (-3.0f64, 5.0f64);
            let steps = (n - 2) as f64;
            std::iter::once(0.0)
                .chain((0..n - 1).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / steps)))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageSet;
    use crate::linalg::Matrix;
    use crate::model::LinearDims;
    use crate::rng::{seeded, uniform};

    fn toy_task(n: usize, seed: u64) -> TaskDataset {
        let mut rng = seeded(seed);
        let mk = |rng: &mut _, n| {
            let px = Matrix::from_fn(n, 4, |_, _| uniform(rng, 0.0, 1.0));
            let labels = (0..n).map(|i| (i % 2) as u8).collect();
            ImageSet::new(2, 2, px, labels).unwrap()
        };
        let train = mk(&mut rng, n);
        let val = mk(&mut rng, 4);
        TaskDataset::new(1, vec![0, 1], train, val).unwrap()
    }

    fn toy_net() -> LinearNet {
        LinearNet::init(
            &LinearDims {
                input: 4,
                hidden: 3,
                outputs: vec![2, 2],
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn zero_readout_gives_zero_fisher() {
        let net =
            LinearNet::from_parts(Matrix::from_fn(3, 4, |i, j| (i + j) as f64), vec![Matrix::zeros(2, 3)]).unwrap();
        let f = fisher_diag(&net, &toy_task(8, 1), 4).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn two_batch_formula() {
        let net = toy_net();
        let task = toy_task(4, 2);
        let f = fisher_diag(&net, &task, 2).unwrap();
        let grad = |idx: [usize; 2]| {
            let b = Batch::new(
                task.train.pixels().select_rows(&idx),
                idx.iter().map(|&i| task.train_targets()[i]).collect(),
                1,
            )
            .unwrap();
            hidden_gradient(&net, &b).unwrap().1
        };
        let (g1, g2) = (grad([0, 1]), grad([2, 3]));
        for k in 0..f.as_slice().len() {
            let (a, b) = (g1.as_slice()[k], g2.as_slice()[k]);
            let expect = (a * a + b * b) / (2.0 * 2.0);
            assert!((f.as_slice()[k] - expect).abs() <= 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn duplicated_batches_leave_fisher_unchanged() {
        let net = toy_net();
        let task = toy_task(4, 3);
        let doubled_px = Matrix::vstack(&[task.train.pixels(), task.train.pixels()]).unwrap();
        let doubled_labels = [task.train.labels(), task.train.labels()].concat();
        let doubled = TaskDataset::new(
            1,
            vec![0, 1],
            ImageSet::new(2, 2, doubled_px, doubled_labels).unwrap(),
            task.val.clone(),
        )
        .unwrap();
        let a = fisher_diag(&net, &task, 4).unwrap();
        let b = fisher_diag(&net, &doubled, 4).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn empty_and_bad_batch_rejected() {
        let net = toy_net();
        let mut task = toy_task(4, 4);
        assert!(matches!(fisher_diag(&net, &task, 0), Err(EwcError::BatchSize)));
        task.train = task.train.select(&[]);
        assert!(matches!(fisher_diag(&net, &task, 2), Err(EwcError::EmptyDataset(1))));
    }

    #[test]
    fn penalty_gradient_cases() {
        let d = Matrix::from_rows(&[[0.1, -0.2], [0.3, 0.4]]);
        let anchor = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let fisher = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let zero = EwcState::new(fisher.clone(), anchor.clone(), 0.0).unwrap();
        let w = Matrix::from_rows(&[[1.5, 1.0], [1.0, 1.0]]);
        assert_eq!(ewc_penalized_grad(&d, &zero, &w).unwrap(), d);
        let st = EwcState::new(fisher, anchor.clone(), 2.0).unwrap();
        assert_eq!(ewc_penalized_grad(&d, &st, &anchor).unwrap(), d);
        let g = ewc_penalized_grad(&d, &st, &w).unwrap();
        assert!((g.get(0, 0) - 1.1).abs() < 1e-15);
        assert_eq!(g.get(1, 1), 0.4);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = seeded(5);
        let mut r = |a, b| Matrix::from_fn(3, 4, |_, _| uniform(&mut rng, a, b));
        let st = EwcState::new(r(0.0, 2.0), r(-1.0, 1.0), 3.5).unwrap();
        let w = r(-1.0, 1.0);
        let g = ewc_penalized_grad(&Matrix::zeros(3, 4), &st, &w).unwrap();
        let h = 1e-6;
        for k in 0..12 {
            let (mut p, mut m) = (w.clone(), w.clone());
            p.as_mut_slice()[k] += h;
            m.as_mut_slice()[k] -= h;
            let fd = (penalty(&st, &p).unwrap() - penalty(&st, &m).unwrap()) / (2.0 * h);
            let an = g.as_slice()[k];
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
        }
    }

    #[test]
    fn invalid_state_rejected() {
        assert!(EwcState::new(Matrix::zeros(2, 2), Matrix::zeros(2, 2), -1.0).is_err());
        assert!(EwcState::new(Matrix::from_rows(&[[-1.0]]), Matrix::zeros(1, 1), 1.0).is_err());
        assert!(EwcState::new(Matrix::zeros(2, 2), Matrix::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-3).abs() < 1e-18);
        assert!((g[24] - 1e5).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn state_round_trips_through_container() {
        let st = EwcState::new(
            Matrix::from_rows(&[[0.25, 1.0]]),
            Matrix::from_rows(&[[0.5, -0.5]]),
            7.0,
        )
        .unwrap();
        let mut c = CacheContainer::new();
        st.to_container("ewc", &mut c);
        let back = CacheContainer::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(EwcState::from_container("ewc", &back).unwrap(), st);
    }
}
