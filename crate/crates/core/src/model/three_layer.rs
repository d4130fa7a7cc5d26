use serde::{Deserialize, Serialize};

use super::{check_dims, init_uniform, softmax_ce, Batch, ModelError, Readouts, TaskNetwork};
use crate::linalg::{gemm, gemm_nt, gemm_tn, Matrix};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeLayerDims {
    pub input: usize,
    pub hidden: [usize; 3],
    pub outputs: Vec<usize>,
}

/// Three-hidden-layer network `o = x·W_{H1}ᵀ·W_{H2}ᵀ·W_{H3}ᵀ·W_{R^k}ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLayerNet {
    w_h1: Matrix,
    w_h2: Matrix,
    w_h3: Matrix,
    readouts: Readouts,
}

impl ThreeLayerNet {
    pub fn init(dims: &ThreeLayerDims, seed: u64) -> Result<Self, ModelError> {
        check_dims(
            "three-layer",
            &[dims.input, dims.hidden[0], dims.hidden[1], dims.hidden[2]],
        )?;
        check_dims("readout", &dims.outputs)?;
        let mut rng = seeded(seed);
        let [h1, h2, h3] = dims.hidden;
        let w_h1 = init_uniform(h1, dims.input, &mut rng);
        let w_h2 = init_uniform(h2, h1, &mut rng);
        let w_h3 = init_uniform(h3, h2, &mut rng);
        let readouts = dims.outputs.iter().map(|&o| init_uniform(o, h3, &mut rng)).collect();
        Ok(Self {
            w_h1,
            w_h2,
            w_h3,
            readouts: Readouts::new(readouts),
        })
    }

    pub fn from_parts(w_h1: Matrix, w_h2: Matrix, w_h3: Matrix, readouts: Vec<Matrix>) -> Result<Self, ModelError> {
        let ok = w_h2.cols() == w_h1.rows()
            && w_h3.cols() == w_h2.rows()
            && readouts.iter().all(|r| r.cols() == w_h3.rows());
        if !ok {
            return Err(ModelError::Dims("three-layer weight shapes do not chain".into()));
        }
        Ok(Self {
            w_h1,
            w_h2,
            w_h3,
            readouts: Readouts::new(readouts),
        })
    }

    pub fn w_h1(&self) -> &Matrix {
        &self.w_h1
    }

    pub fn w_h2(&self) -> &Matrix {
        &self.w_h2
    }

    pub fn w_h3(&self) -> &Matrix {
        &self.w_h3
    }

    pub fn sgd_step(&mut self, grads: &ThreeLayerGrads, lr: f64) -> Result<(), ModelError> {
        self.w_h1.axpy(-lr, &grads.w_h1)?;
        self.w_h2.axpy(-lr, &grads.w_h2)?;
        self.w_h3.axpy(-lr, &grads.w_h3)?;
        if let Some(d_r) = &grads.readout {
            if !self.readouts.is_frozen(grads.task_id) {
                self.readouts.get_mut(grads.task_id)?.axpy(-lr, d_r)?;
            }
        }
        Ok(())
    }

    fn activations(&self, inputs: &Matrix) -> Result<[Matrix; 3], ModelError> {
        let a1 = gemm_nt(inputs, &self.w_h1)?;
        let a2 = gemm_nt(&a1, &self.w_h2)?;
        let a3 = gemm_nt(&a2, &self.w_h3)?;
        Ok([a1, a2, a3])
    }
}

impl TaskNetwork for ThreeLayerNet {
    fn hidden(&self, inputs: &Matrix) -> Result<Matrix, ModelError> {
        let [_, _, a3] = self.activations(inputs)?;
        Ok(a3)
    }

    fn readouts(&self) -> &Readouts {
        &self.readouts
    }

    fn readouts_mut(&mut self) -> &mut Readouts {
        &mut self.readouts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLayerGrads {
    pub task_id: usize,
    pub loss: f64,
    pub w_h1: Matrix,
    pub w_h2: Matrix,
    pub w_h3: Matrix,
    pub readout: Option<Matrix>,
}

/// Backpropagated gradients of the batch-mean cross-entropy.
///
/// With `e_o_override`, the supplied rows replace the loss-derived error
/// `e_o` when propagating into the hidden layers:
/// `ΔW_{H3} = (e·W_R)ᵀ·a₂`, `ΔW_{H2} = (e·W_R·W_{H3})ᵀ·a₁`,
/// `ΔW_{H1} = (e·W_R·W_{H3}·W_{H2})ᵀ·x`. The readout gradient always uses
/// the loss-derived `e_o`.
pub fn grads_three_layer(
    net: &ThreeLayerNet,
    batch: &Batch,
    e_o_override: Option<&Matrix>,
) -> Result<ThreeLayerGrads, ModelError> {
    if net.is_frozen(batch.task_id) {
        return Err(ModelError::FrozenReadout(batch.task_id));
    }
    let w_r = net.readout(batch.task_id)?;
    let [a1, a2, a3] = net.activations(&batch.inputs)?;
    let logits = gemm_nt(&a3, w_r)?;
    let (loss, e_o) = softmax_ce(&logits, &batch.labels)?;
    let e_hidden = match e_o_override {
        Some(e) => {
            if e.shape() != e_o.shape() {
                return Err(ModelError::Dims(format!(
                    "error override is {}x{}, expected {}x{}",
                    e.rows(),
                    e.cols(),
                    e_o.rows(),
                    e_o.cols()
                )));
            }
            e
        }
        None => &e_o,
    };
    let delta3 = gemm(e_hidden, w_r)?;
    let d_w_h3 = gemm_tn(&delta3, &a2)?;
    let delta2 = gemm(&delta3, &net.w_h3)?;
    let d_w_h2 = gemm_tn(&delta2, &a1)?;
    let delta1 = gemm(&delta2, &net.w_h2)?;
    let d_w_h1 = gemm_tn(&delta1, &batch.inputs)?;
    let readout = gemm_tn(&e_o, &a3)?;
    Ok(ThreeLayerGrads {
        task_id: batch.task_id,
        loss,
        w_h1: d_w_h1,
        w_h2: d_w_h2,
        w_h3: d_w_h3,
        readout: Some(readout),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded as rng_seeded, uniform};

    fn toy() -> (ThreeLayerNet, Batch) {
        let dims = ThreeLayerDims {
            input: 3,
            hidden: [2, 2, 2],
            outputs: vec![2, 2],
        };
        let net = ThreeLayerNet::init(&dims, 17).unwrap();
        let mut rng = rng_seeded(4);
        let x = Matrix::from_fn(4, 3, |_, _| uniform(&mut rng, -1.0, 1.0));
        (net, Batch::new(x, vec![0, 1, 1, 0], 2).unwrap())
    }

    fn loss(net: &ThreeLayerNet, batch: &Batch) -> f64 {
        let f = net.forward(&batch.inputs, batch.task_id).unwrap();
        softmax_ce(&f.logits, &batch.labels).unwrap().0
    }

    #[test]
    fn matches_finite_differences() {
        let (net, batch) = toy();
        let g = grads_three_layer(&net, &batch, None).unwrap();
        let h = 1e-5;
        type Layer<'a> = (fn(&mut ThreeLayerNet) -> &mut Matrix, &'a Matrix);
        let layers: [Layer; 3] = [
            (|n| &mut n.w_h1, &g.w_h1),
            (|n| &mut n.w_h2, &g.w_h2),
            (|n| &mut n.w_h3, &g.w_h3),
        ];
        for (get, grad) in layers {
            for i in 0..grad.rows() {
                for j in 0..grad.cols() {
                    let mut p = net.clone();
                    let mut m = net.clone();
                    let v = get(&mut p.clone()).get(i, j);
                    get(&mut p).set(i, j, v + h);
                    get(&mut m).set(i, j, v - h);
                    let fd = (loss(&p, &batch) - loss(&m, &batch)) / (2.0 * h);
                    let an = grad.get(i, j);
                    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-2), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn zero_override_zeroes_hidden_gradients() {
        let (net, batch) = toy();
        let g = grads_three_layer(&net, &batch, Some(&Matrix::zeros(4, 2))).unwrap();
        assert_eq!(g.w_h1.max_abs() + g.w_h2.max_abs() + g.w_h3.max_abs(), 0.0);
        assert!(g.readout.unwrap().max_abs() > 0.0);
    }

    #[test]
    fn override_with_true_error_is_identity() {
        let (net, batch) = toy();
        let f = net.forward(&batch.inputs, 2).unwrap();
        let (_, e) = softmax_ce(&f.logits, &batch.labels).unwrap();
        assert_eq!(
            grads_three_layer(&net, &batch, Some(&e)).unwrap(),
            grads_three_layer(&net, &batch, None).unwrap()
        );
    }

    #[test]
    fn override_shape_checked() {
        let (net, batch) = toy();
        assert!(grads_three_layer(&net, &batch, Some(&Matrix::zeros(1, 2))).is_err());
    }
}
