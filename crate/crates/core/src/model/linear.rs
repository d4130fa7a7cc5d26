use serde::{Deserialize, Serialize};

use super::{check_dims, init_uniform, softmax_ce, Batch, ModelError, Readouts, TaskNetwork};
use crate::data::{CacheContainer, CacheError};
use crate::linalg::{gemm, gemm_nt, gemm_tn, Matrix};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearDims {
    pub input: usize,
    pub hidden: usize,
    /// Output units per task readout.
    pub outputs: Vec<usize>,
}

impl LinearDims {
    /// 784 inputs, 11 hidden units, two five-way readouts.
    pub fn split_mnist() -> Self {
        Self {
            input: 784,
            hidden: 11,
            outputs: vec![5, 5],
        }
    }
}

/// One-hidden-layer network `o = x·W_Hᵀ·W_{R^k}ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNet {
    w_h: Matrix,
    readouts: Readouts,
}

impl LinearNet {
    /// Draws `W_H` and then every readout, in task order, from one seeded
    /// stream.
    pub fn init(dims: &LinearDims, seed: u64) -> Result<Self, ModelError> {
        check_dims("linear", &[dims.input, dims.hidden])?;
        check_dims("readout", &dims.outputs)?;
        let mut rng = seeded(seed);
        let w_h = init_uniform(dims.hidden, dims.input, &mut rng);
        let readouts = dims
            .outputs
            .iter()
            .map(|&o| init_uniform(o, dims.hidden, &mut rng))
            .collect();
        Ok(Self {
            w_h,
            readouts: Readouts::new(readouts),
        })
    }

    pub fn from_parts(w_h: Matrix, readouts: Vec<Matrix>) -> Result<Self, ModelError> {
        if let Some(r) = readouts.iter().find(|r| r.cols() != w_h.rows()) {
            return Err(ModelError::Dims(format!(
                "readout {}x{} does not read from {} hidden units",
                r.rows(),
                r.cols(),
                w_h.rows()
            )));
        }
        Ok(Self {
            w_h,
            readouts: Readouts::new(readouts),
        })
    }

    pub fn w_h(&self) -> &Matrix {
        &self.w_h
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.rows()
    }

    /// `w ← w − lr·grad` for `W_H` and, unless frozen, the batch readout.
    pub fn sgd_step(&mut self, grads: &LinearGrads, lr: f64) -> Result<(), ModelError> {
        self.w_h.axpy(-lr, &grads.w_h)?;
        if let Some(d_r) = &grads.readout {
            if !self.readouts.is_frozen(grads.task_id) {
                self.readouts.get_mut(grads.task_id)?.axpy(-lr, d_r)?;
            }
        }
        Ok(())
    }

    pub fn to_container(&self, prefix: &str, c: &mut CacheContainer) {
        c.put_matrix(format!("{prefix}.w_h"), &self.w_h);
        for (k, r) in self.readouts.iter().enumerate() {
            c.put_matrix(format!("{prefix}.readout.{}", k + 1), r);
        }
        c.put(
            format!("{prefix}.frozen"),
            self.readouts.frozen().map(|t| t as f64).collect(),
        );
    }

    pub fn from_container(prefix: &str, c: &CacheContainer) -> Result<Self, CacheError> {
        let w_h = c.matrix(&format!("{prefix}.w_h"))?;
        let mut readouts = Vec::new();
        while c.contains(&format!("{prefix}.readout.{}", readouts.len() + 1)) {
            readouts.push(c.matrix(&format!("{prefix}.readout.{}", readouts.len() + 1))?);
        }
        let mut net = Self::from_parts(w_h, readouts).map_err(|e| CacheError::Malformed(e.to_string()))?;
        for &t in c.get(&format!("{prefix}.frozen"))? {
            net.readouts
                .freeze(t as usize)
                .map_err(|e| CacheError::Malformed(e.to_string()))?;
        }
        Ok(net)
    }
}

impl TaskNetwork for LinearNet {
    fn hidden(&self, inputs: &Matrix) -> Result<Matrix, ModelError> {
        Ok(gemm_nt(inputs, &self.w_h)?)
    }

    fn readouts(&self) -> &Readouts {
        &self.readouts
    }

    fn readouts_mut(&mut self) -> &mut Readouts {
        &mut self.readouts
    }
}

/// Gradients of the batch-mean cross-entropy for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub task_id: usize,
    pub loss: f64,
    /// `∂L/∂W_H`, `h × x`.
    pub w_h: Matrix,
    /// `∂L/∂W_{R^k}`, `o × h`; `None` when the readout is not trained.
    pub readout: Option<Matrix>,
}

struct Backprop {
    loss: f64,
    hidden: Matrix,
    e_o: Matrix,
    d_w_h: Matrix,
}

fn backprop(net: &LinearNet, batch: &Batch) -> Result<Backprop, ModelError> {
    let fwd = net.forward(&batch.inputs, batch.task_id)?;
    let (loss, e_o) = softmax_ce(&fwd.logits, &batch.labels)?;
    let w_r = net.readout(batch.task_id)?;
    // δ = e_o·W_R (b × h); ∂L/∂W_H = δᵀ·x
    let delta = gemm(&e_o, w_r)?;
    let d_w_h = gemm_tn(&delta, &batch.inputs)?;
    Ok(Backprop {
        loss,
        hidden: fwd.hidden,
        e_o,
        d_w_h,
    })
}

/// Loss and `∂L/∂W_H` only; valid for frozen readouts (used for Fisher
/// estimates on a finished task).
pub fn hidden_gradient(net: &LinearNet, batch: &Batch) -> Result<(f64, Matrix), ModelError> {
    let bp = backprop(net, batch)?;
    Ok((bp.loss, bp.d_w_h))
}

/// Analytic gradients `∂L/∂W_{R} = e_oᵀ·h` and `∂L/∂W_H = (e_o·W_R)ᵀ·x`.
pub fn grads_linear(net: &LinearNet, batch: &Batch) -> Result<LinearGrads, ModelError> {
    if net.is_frozen(batch.task_id) {
        return Err(ModelError::FrozenReadout(batch.task_id));
    }
    let bp = backprop(net, batch)?;
    let readout = gemm_tn(&bp.e_o, &bp.hidden)?;
    Ok(LinearGrads {
        task_id: batch.task_id,
        loss: bp.loss,
        w_h: bp.d_w_h,
        readout: Some(readout),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded as rng_seeded, uniform};

    fn toy_net(seed: u64) -> LinearNet {
        LinearNet::init(
            &LinearDims {
                input: 4,
                hidden: 3,
                outputs: vec![2, 2],
            },
            seed,
        )
        .unwrap()
    }

    fn toy_batch(seed: u64, b: usize, task: usize) -> Batch {
        let mut rng = rng_seeded(seed);
        let x = Matrix::from_fn(b, 4, |_, _| uniform(&mut rng, -1.0, 1.0));
        Batch::new(x, (0..b).map(|i| i % 2).collect(), task).unwrap()
    }

    fn loss_of(net: &LinearNet, batch: &Batch) -> f64 {
        let f = net.forward(&batch.inputs, batch.task_id).unwrap();
        softmax_ce(&f.logits, &batch.labels).unwrap().0
    }

    #[test]
    fn split_mnist_dims_and_bounds() {
        let net = LinearNet::init(&LinearDims::split_mnist(), 1).unwrap();
        assert_eq!(net.w_h().shape(), (11, 784));
        assert_eq!(net.readout(1).unwrap().shape(), (5, 11));
        assert!(net.w_h().max_abs() <= 1.0 / 28.0);
        assert!(net.readout(2).unwrap().max_abs() <= 1.0 / 11f64.sqrt());
        assert_eq!(net, LinearNet::init(&LinearDims::split_mnist(), 1).unwrap());
        assert_ne!(net, LinearNet::init(&LinearDims::split_mnist(), 2).unwrap());
    }

    #[test]
    fn zero_dims_rejected() {
        let dims = LinearDims {
            input: 0,
            hidden: 2,
            outputs: vec![2],
        };
        assert!(LinearNet::init(&dims, 0).is_err());
    }

    #[test]
    fn forward_linearity_and_identity() {
        let net = LinearNet::from_parts(Matrix::identity(2), vec![Matrix::from_rows(&[[2.0, -1.0]])]).unwrap();
        let x = Matrix::from_rows(&[[3.0, 4.0]]);
        let f = net.forward(&x, 1).unwrap();
        assert_eq!(f.hidden, x);
        // hand computation: 3·2 + 4·(−1) = 2
        assert_eq!(f.logits, Matrix::from_rows(&[[2.0]]));
        let z = net.forward(&Matrix::zeros(1, 2), 1).unwrap();
        assert_eq!(z.logits.max_abs(), 0.0);
        assert!(matches!(net.forward(&x, 2), Err(ModelError::UnknownTask(2))));
    }

    #[test]
    fn hand_set_two_by_two() {
        let w_h = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]);
        let net = LinearNet::from_parts(w_h, vec![Matrix::from_rows(&[[1.0, 3.0]])]).unwrap();
        let x = Matrix::from_rows(&[[2.0, 1.0]]);
        // hidden = (1·2 + 2·1, 0.5·2 − 1·1) = (4, 0); logit = 4·1 + 0·3 = 4
        let f = net.forward(&x, 1).unwrap();
        assert_eq!(f.hidden, Matrix::from_rows(&[[4.0, 0.0]]));
        assert_eq!(f.logits, Matrix::from_rows(&[[4.0]]));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = toy_net(5);
        let batch = toy_batch(9, 3, 1);
        let g = grads_linear(&net, &batch).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..4 {
                let mut p = net.clone();
                p.w_h.set(i, j, net.w_h.get(i, j) + h);
                let mut m = net.clone();
                m.w_h.set(i, j, net.w_h.get(i, j) - h);
                let fd = (loss_of(&p, &batch) - loss_of(&m, &batch)) / (2.0 * h);
                let an = g.w_h.get(i, j);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-2), "{fd} vs {an}");
            }
        }
        let d_r = g.readout.as_ref().unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let mut p = net.clone();
                let mut m = net.clone();
                let v = net.readout(1).unwrap().get(i, j);
                p.readouts.get_mut(1).unwrap().set(i, j, v + h);
                m.readouts.get_mut(1).unwrap().set(i, j, v - h);
                let fd = (loss_of(&p, &batch) - loss_of(&m, &batch)) / (2.0 * h);
                assert!((fd - d_r.get(i, j)).abs() <= 1e-6 * d_r.get(i, j).abs().max(1e-2));
            }
        }
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let net = toy_net(2);
        let batch = toy_batch(4, 3, 2);
        let doubled = Batch::new(
            Matrix::vstack(&[&batch.inputs, &batch.inputs]).unwrap(),
            batch.labels.iter().chain(&batch.labels).copied().collect(),
            2,
        )
        .unwrap();
        let a = grads_linear(&net, &batch).unwrap();
        let b = grads_linear(&net, &doubled).unwrap();
        assert!(a.w_h.sub(&b.w_h).unwrap().max_abs() < 1e-15);
        assert!((a.loss - b.loss).abs() < 1e-15);
    }

    #[test]
    fn frozen_readout_refuses_gradient_but_hidden_gradient_works() {
        let mut net = toy_net(1);
        net.freeze(1).unwrap();
        let batch = toy_batch(2, 2, 1);
        assert!(matches!(grads_linear(&net, &batch), Err(ModelError::FrozenReadout(1))));
        assert!(hidden_gradient(&net, &batch).is_ok());
    }

    #[test]
    fn sgd_arithmetic_and_freezing() {
        let mut net = LinearNet::from_parts(Matrix::from_rows(&[[1.0]]), vec![Matrix::from_rows(&[[1.0]])]).unwrap();
        let grads = LinearGrads {
            task_id: 1,
            loss: 0.0,
            w_h: Matrix::from_rows(&[[2.0]]),
            readout: Some(Matrix::from_rows(&[[2.0]])),
        };
        net.sgd_step(&grads, 0.1).unwrap();
        assert!((net.w_h().get(0, 0) - 0.8).abs() < 1e-15);
        net.freeze(1).unwrap();
        let before = net.readout(1).unwrap().clone();
        net.sgd_step(&grads, 0.1).unwrap();
        assert_eq!(net.readout(1).unwrap(), &before);

        let snapshot = net.clone();
        net.sgd_step(&grads, 0.0).unwrap();
        assert_eq!(net, snapshot);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut net = toy_net(8);
        net.freeze(1).unwrap();
        let mut c = CacheContainer::new();
        net.to_container("net", &mut c);
        let back = LinearNet::from_container("net", &CacheContainer::from_bytes(&c.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
