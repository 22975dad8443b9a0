//! Dense tensors and reverse-mode differentiation for small score networks.

mod graph;
mod model;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use model::{
    Activation, BoundModel, Checkpoint, Layer, LayerSpec, ScoreModel, MODEL_FORMAT_VERSION,
};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("loss must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Flat gradient of `loss` with respect to the parameters of `model`.
pub fn grad_wrt_params(loss: Var<'_>, model: &BoundModel<'_, '_>) -> Result<Vec<f64>, DiffError> {
    let grads = loss.graph().backward(loss)?;
    Ok(model.param_grads(&grads))
}

/// Gradient of `loss` with respect to the input leaf `x`.
pub fn grad_wrt_input(loss: Var<'_>, x: Var<'_>) -> Result<Tensor, DiffError> {
    let grads = loss.graph().backward(loss)?;
    Ok(grads.wrt(x))
}

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences of step `step`. Returns
/// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn finite_diff_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, DiffError>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Var<'g>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = {
        let g = Graph::new();
        let x = g.leaf(point.clone());
        let y = f(&g, x);
        if !y.value().is_finite() {
            return Err(DiffError::NonFinite { coordinate: 0 });
        }
        grad_wrt_input(y, x)?
    };
    let eval = |p: Tensor| -> f64 {
        let g = Graph::new();
        let x = g.leaf(p);
        f(&g, x).item()
    };
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let (fp, fm) = (eval(plus), eval(minus));
        let a = analytic.data()[i];
        if !(fp.is_finite() && fm.is_finite() && a.is_finite()) {
            return Err(DiffError::NonFinite { coordinate: i });
        }
        let numeric = (fp - fm) / (2.0 * step);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fd_check_quadratic() {
        let p = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let err = finite_diff_check(|_, x| (x * x).sum(), &p, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn fd_check_constant() {
        let p = Tensor::vector(vec![1.0, 2.0]);
        let err = finite_diff_check(|g, x| (x * 0.0).sum() + g.scalar(3.0), &p, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn fd_check_reports_non_finite_coordinate() {
        let p = Tensor::vector(vec![1.0, 1e-6]);
        // ln of a negative number once the second coordinate is pushed below zero
        let err = finite_diff_check(|_, x| x.ln().sum(), &p, 1e-5).unwrap_err();
        assert_eq!(err, DiffError::NonFinite { coordinate: 1 });
    }

    fn logistic_loss<'g>(m: &BoundModel<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = m.forward(x).unwrap();
        s.logsumexp() - s.at(0)
    }

    #[test]
    fn mlp_param_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for act in [Activation::Tanh, Activation::Relu] {
            let model = ScoreModel::mlp(3, &[5], 4, act, &mut rng);
            let x = Tensor::vector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
            let theta = Tensor::vector(model.params_flat());
            let err = finite_diff_check(
                |g, p| logistic_loss(&model.bind_flat(p), g.leaf(x.clone())),
                &theta,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{act:?}: {err}");

            // the per-tensor binding yields the same flat gradient
            let g = Graph::new();
            let bm = model.bind(&g);
            let per_tensor = grad_wrt_params(logistic_loss(&bm, g.leaf(x.clone())), &bm).unwrap();
            let g2 = Graph::new();
            let p = g2.leaf(theta.clone());
            let flat = grad_wrt_input(logistic_loss(&model.bind_flat(p), g2.leaf(x.clone())), p)
                .unwrap();
            assert_eq!(per_tensor, flat.into_data());
        }
    }

    #[test]
    fn mlp_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = ScoreModel::mlp(4, &[6], 3, Activation::Tanh, &mut rng);
        let x = Tensor::vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let err = finite_diff_check(
            |g, x| {
                let bm = model.bind(g);
                logistic_loss(&bm, x)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
