use crate::linalg::{gemm, Matrix};

use super::{DecompositionError, ReadoutDecomposition};

/// Gradient filter `A = α·CCᵀ + β·NNᵀ` built from a prior readout.
///
/// With `α = 0`, `W_{R¹}·A = 0`, so updates `W_H ← W_H − lr·A·ΔW_H` leave
/// the prior task's logits unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    pub alpha: f64,
    pub beta: f64,
    pub a: Matrix,
}

impl ProjectionSpec {
    pub fn new(alpha: f64, beta: f64, decomp: &ReadoutDecomposition) -> Result<Self, DecompositionError> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DecompositionError::Domain(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        // Equal weights give α·(CCᵀ + NNᵀ) = α·I; build it exactly so that
        // α = β = 1 reproduces unfiltered SGD bit for bit.
        let a = if alpha == beta {
            Matrix::identity(decomp.dim()).scale(alpha)
        } else {
            let mut a = decomp.p_range.scale(alpha);
            a.axpy(beta, &decomp.p_null)?;
            a
        };
        Ok(Self { alpha, beta, a })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }
}

/// `A·ΔW_H` for a hidden-layer gradient of shape `h × x`.
pub fn project_hidden_gradient(d_w_h: &Matrix, spec: &ProjectionSpec) -> Result<Matrix, DecompositionError> {
    Ok(gemm(&spec.a, d_w_h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::readout_decomposition;
    use crate::rng::{seeded, uniform};

    fn setup() -> (Matrix, ReadoutDecomposition, Matrix) {
        let mut rng = seeded(21);
        let w_r = Matrix::from_fn(5, 11, |_, _| uniform(&mut rng, -1.0, 1.0));
        let d = readout_decomposition(&w_r).unwrap();
        let g = Matrix::from_fn(11, 7, |_, _| uniform(&mut rng, -3.0, 3.0));
        (w_r, d, g)
    }

    #[test]
    fn unit_weights_pass_gradient_through() {
        let (_, d, g) = setup();
        let spec = ProjectionSpec::new(1.0, 1.0, &d).unwrap();
        assert_eq!(spec.a, Matrix::identity(11));
        assert_eq!(project_hidden_gradient(&g, &spec).unwrap(), g);
    }

    #[test]
    fn zero_weights_kill_gradient() {
        let (_, d, g) = setup();
        let spec = ProjectionSpec::new(0.0, 0.0, &d).unwrap();
        assert_eq!(project_hidden_gradient(&g, &spec).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn null_only_projection_is_invisible_to_prior_readout() {
        let (w_r, d, g) = setup();
        let spec = ProjectionSpec::new(0.0, 1.0, &d).unwrap();
        assert!(gemm(&w_r, &spec.a).unwrap().max_abs() <= 1e-9 * w_r.max_abs().max(1.0));
        let pg = project_hidden_gradient(&g, &spec).unwrap();
        let scale = w_r.max_abs().max(1.0) * g.max_abs().max(1.0);
        assert!(gemm(&w_r, &pg).unwrap().max_abs() <= 1e-9 * scale);
    }

    #[test]
    fn projection_is_linear() {
        let (_, d, g) = setup();
        let spec = ProjectionSpec::new(0.3, 0.8, &d).unwrap();
        let a = project_hidden_gradient(&g.scale(2.5), &spec).unwrap();
        let b = project_hidden_gradient(&g, &spec).unwrap().scale(2.5);
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * b.max_abs().max(1.0));
    }

    #[test]
    fn out_of_range_weights_and_shapes_rejected() {
        let (_, d, _) = setup();
        assert!(ProjectionSpec::new(1.5, 0.0, &d).is_err());
        assert!(ProjectionSpec::new(0.0, -0.1, &d).is_err());
        let spec = ProjectionSpec::new(0.0, 1.0, &d).unwrap();
        assert!(project_hidden_gradient(&Matrix::zeros(3, 2), &spec).is_err());
    }
}
