use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Var};
use super::tensor::{matmul_t, Tensor};
use super::DiffError;

pub const MODEL_FORMAT_VERSION: &str = "deferkit-model-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    fn apply_var(self, v: Var<'_>) -> Var<'_> {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.relu(),
            Activation::Tanh => v.tanh(),
        }
    }
}

/// Affine block `act(x·Wᵀ + b)` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, DiffError> {
        if weight.shape().len() != 2 || bias.len() != weight.rows() {
            return Err(DiffError::ShapeMismatch {
                expected: vec![weight.rows()],
                found: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Differentiable map from feature vectors to score vectors: a stack of
/// affine layers with ReLU/tanh in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct ScoreModel {
    layers: Vec<Layer>,
}

/// Parameters of a [`ScoreModel`] registered on a [`Graph`].
pub struct BoundModel<'m, 'g> {
    model: &'m ScoreModel,
    params: Vec<(Var<'g>, Var<'g>)>,
}

impl ScoreModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self, DiffError> {
        if layers.is_empty() {
            return Err(DiffError::InvalidModel("model has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(DiffError::InvalidModel(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialised MLP. Hidden layers use `activation`, the output layer is affine.
    /// Weights are drawn from N(0, 1/fan_in); biases start at zero.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (inp, out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (1.0 / inp as f64).sqrt()).expect("std > 0");
                let data = (0..inp * out).map(|_| normal.sample(rng)).collect();
                Layer {
                    weight: Tensor::matrix(out, inp, data).expect("weight shape"),
                    bias: Tensor::zeros(vec![out]),
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        activation
                    },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn linear<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Self::mlp(input_dim, &[], output_dim, Activation::Identity, rng)
    }

    /// Model whose output ignores the input: zero weights, bias `scores`.
    pub fn constant(input_dim: usize, scores: &[f64]) -> Self {
        Self {
            layers: vec![Layer {
                weight: Tensor::zeros(vec![scores.len(), input_dim]),
                bias: Tensor::vector(scores.to_vec()),
                activation: Activation::Identity,
            }],
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Flat parameters, layer by layer, weight before bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), DiffError> {
        if flat.len() != self.num_params() {
            return Err(DiffError::ShapeMismatch {
                expected: vec![self.num_params()],
                found: vec![flat.len()],
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Squared ℓ2 norm of all parameters.
    pub fn sq_norm(&self) -> f64 {
        self.params_flat().iter().map(|v| v * v).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), DiffError> {
        if x.cols() != self.input_dim() {
            return Err(DiffError::ShapeMismatch {
                expected: vec![self.input_dim()],
                found: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Evaluates without recording a graph. `x` is one input vector or a `[n, in]` batch;
    /// the result is `[n, out]` (a vector for a single input).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, DiffError> {
        self.check_input(x)?;
        let n = x.rows();
        let mut cur = x.data().to_vec();
        for l in &self.layers {
            let (out, inp) = (l.output_dim(), l.input_dim());
            let mut y = matmul_t(&cur, n, l.weight.data(), out, inp);
            for (i, v) in y.iter_mut().enumerate() {
                *v = l.activation.apply(*v + l.bias.data()[i % out]);
            }
            cur = y;
        }
        if x.shape().len() <= 1 {
            Ok(Tensor::vector(cur))
        } else {
            Tensor::matrix(n, self.output_dim(), cur)
        }
    }

    /// Scores for a single input slice.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, DiffError> {
        Ok(self.forward(&Tensor::vector(x.to_vec()))?.into_data())
    }

    /// Registers the parameters as leaves of `g`.
    pub fn bind<'m, 'g>(&'m self, g: &'g Graph) -> BoundModel<'m, 'g> {
        let params = self
            .layers
            .iter()
            .map(|l| (g.leaf(l.weight.clone()), g.leaf(l.bias.clone())))
            .collect();
        BoundModel {
            model: self,
            params,
        }
    }

    /// Binds the parameters as slices of one flat leaf `theta`
    /// (in [`ScoreModel::params_flat`] order). The stored parameter values are ignored.
    pub fn bind_flat<'m, 'g>(&'m self, theta: Var<'g>) -> BoundModel<'m, 'g> {
        assert_eq!(theta.len(), self.num_params(), "flat parameter length");
        let mut off = 0;
        let params = self
            .layers
            .iter()
            .map(|l| {
                let w = theta.slice(off, l.weight.shape().to_vec());
                off += l.weight.len();
                let b = theta.slice(off, l.bias.shape().to_vec());
                off += l.bias.len();
                (w, b)
            })
            .collect();
        BoundModel {
            model: self,
            params,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: MODEL_FORMAT_VERSION.to_string(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                    activation: l.activation,
                    weight: l.weight.data().to_vec(),
                    bias: l.bias.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DiffError> {
        if ck.version != MODEL_FORMAT_VERSION {
            return Err(DiffError::InvalidModel(format!(
                "unsupported checkpoint version {:?}",
                ck.version
            )));
        }
        let layers = ck
            .layers
            .iter()
            .map(|s| {
                Layer::new(
                    Tensor::matrix(s.output_dim, s.input_dim, s.weight.clone())?,
                    Tensor::new(vec![s.output_dim], s.bias.clone())?,
                    s.activation,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = Self::new(layers)?;
        if model.input_dim() != ck.input_dim || model.output_dim() != ck.output_dim {
            return Err(DiffError::InvalidModel(
                "declared dimensions disagree with layers".into(),
            ));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DiffError> {
        let ck: Checkpoint =
            serde_json::from_str(s).map_err(|e| DiffError::InvalidModel(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

impl From<ScoreModel> for Checkpoint {
    fn from(m: ScoreModel) -> Self {
        m.to_checkpoint()
    }
}

impl TryFrom<Checkpoint> for ScoreModel {
    type Error = DiffError;

    fn try_from(ck: Checkpoint) -> Result<Self, DiffError> {
        Self::from_checkpoint(&ck)
    }
}

impl<'m, 'g> BoundModel<'m, 'g> {
    pub fn model(&self) -> &'m ScoreModel {
        self.model
    }

    /// Graph forward of one input vector (`[in]`) or a batch (`[n, in]`).
    pub fn forward(&self, x: Var<'g>) -> Result<Var<'g>, DiffError> {
        let xv = x.value();
        self.model.check_input(&xv)?;
        let mut cur = x;
        for (l, (w, b)) in self.model.layers.iter().zip(&self.params) {
            cur = l.activation.apply_var(cur.matmul_t(*w).add_bias(*b));
        }
        if xv.shape().len() <= 1 {
            cur = cur.row(0);
        }
        Ok(cur)
    }

    pub fn param_vars(&self) -> Vec<Var<'g>> {
        self.params.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    /// `Σ θ²` over all parameters, recorded on the graph.
    pub fn sq_norm(&self) -> Var<'g> {
        let parts: Vec<_> = self.param_vars().into_iter().map(|p| (p * p).sum()).collect();
        let g = parts[0].graph();
        g.concat(&parts).sum()
    }

    /// Flat parameter gradient in [`ScoreModel::params_flat`] order.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.model.num_params());
        for v in self.param_vars() {
            out.extend_from_slice(grads.wrt(v).data());
        }
        out
    }
}

/// On-disk model format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer() {
        let l = Layer::new(
            Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::vector(vec![0.0, 0.0]),
            Activation::Identity,
        )
        .unwrap();
        let m = ScoreModel::new(vec![l]).unwrap();
        assert_eq!(m.scores(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn constant_layer() {
        let l = Layer::new(
            Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap(),
            Tensor::vector(vec![5.0]),
            Activation::Identity,
        )
        .unwrap();
        let m = ScoreModel::new(vec![l]).unwrap();
        assert_eq!(m.scores(&[-7.0, 1e3]).unwrap(), vec![5.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = ScoreModel::constant(3, &[1.0]);
        assert!(m.scores(&[1.0, 2.0]).is_err());
        let g = Graph::new();
        let bm = m.bind(&g);
        assert!(bm.forward(g.leaf(Tensor::vector(vec![1.0]))).is_err());
    }

    #[test]
    fn mismatched_layers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ScoreModel::linear(2, 3, &mut rng).layers()[0].clone();
        let b = ScoreModel::linear(4, 1, &mut rng).layers()[0].clone();
        assert!(ScoreModel::new(vec![a, b]).is_err());
    }

    #[test]
    fn two_layer_mlp_matches_hand_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = ScoreModel::mlp(3, &[4], 2, Activation::Tanh, &mut rng);
        let x = [0.2, -0.7, 1.3];
        let (l1, l2) = (&m.layers()[0], &m.layers()[1]);
        let mut hidden = [0.0; 4];
        for (o, h) in hidden.iter_mut().enumerate() {
            let mut s = l1.bias.data()[o];
            for i in 0..3 {
                s += l1.weight.data()[o * 3 + i] * x[i];
            }
            *h = s.tanh();
        }
        let mut expected = [0.0; 2];
        for (o, e) in expected.iter_mut().enumerate() {
            let mut s = l2.bias.data()[o];
            for (i, h) in hidden.iter().enumerate() {
                s += l2.weight.data()[o * 4 + i] * h;
            }
            *e = s;
        }
        let got = m.scores(&x).unwrap();
        for (a, b) in got.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let g = Graph::new();
        let bm = m.bind(&g);
        let out = bm.forward(g.leaf(Tensor::vector(x.to_vec()))).unwrap();
        assert_eq!(out.value().data(), got.as_slice());
    }

    #[test]
    fn batch_forward_matches_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ScoreModel::mlp(2, &[5], 3, Activation::Relu, &mut rng);
        let a = [0.1, 0.9];
        let b = [-0.4, 0.3];
        let batch = m.forward(&Tensor::from_rows(&[&a, &b]).unwrap()).unwrap();
        assert_eq!(batch.row(0), m.scores(&a).unwrap().as_slice());
        assert_eq!(batch.row(1), m.scores(&b).unwrap().as_slice());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ScoreModel::mlp(3, &[6, 4], 5, Activation::Relu, &mut rng);
        let back = ScoreModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let x = [0.3, 0.1, -2.0];
        assert_eq!(back.scores(&x).unwrap(), m.scores(&x).unwrap());
    }

    #[test]
    fn checkpoint_version_checked() {
        let mut ck = ScoreModel::constant(1, &[0.0]).to_checkpoint();
        ck.version = "other".into();
        assert!(ScoreModel::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn param_order_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = ScoreModel::mlp(2, &[3], 2, Activation::Tanh, &mut rng);
        let p = m.params_flat();
        m.set_params_flat(&p).unwrap();
        assert_eq!(m.params_flat(), p);
        let g = Graph::new();
        let bm = m.bind(&g);
        let flat: Vec<f64> = bm
            .param_vars()
            .iter()
            .flat_map(|v| v.value().into_data())
            .collect();
        assert_eq!(flat, p);
    }
}
