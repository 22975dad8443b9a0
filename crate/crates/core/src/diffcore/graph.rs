//! Expression graph with reverse-mode accumulation.
//!
//! A [`Graph`] is rebuilt for every evaluation. Nodes are appended in
//! topological order, so the backward sweep is a single reverse pass.

use std::cell::RefCell;
use std::ops;

use super::tensor::{matmul_t, Tensor};
use super::DiffError;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Expm1(usize),
    Ln(usize),
    Powf(usize, f64),
    Sqrt(usize),
    Abs(usize),
    Relu(usize),
    Tanh(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    LogSumExp(usize),
    Norm2(usize),
    Index(usize, usize),
    Row(usize, usize),
    Slice(usize, usize),
    Concat(Vec<usize>),
    MatMulT(usize, usize),
    AddBias(usize, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Tape of recorded operations.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match &self.adjoints[var.id] {
            Some(t) => t.clone(),
            None => Tensor::zeros(self.shapes[var.id].clone()),
        }
    }
}

fn broadcast_shape(a: &Tensor, b: &Tensor) -> Vec<usize> {
    if a.shape() == b.shape() || b.len() == 1 {
        a.shape().to_vec()
    } else if a.len() == 1 {
        b.shape().to_vec()
    } else {
        panic!(
            "incompatible operand shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let shape = broadcast_shape(a, b);
    let n: usize = shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let data = (0..n)
        .map(|i| {
            let x = if ad.len() == 1 { ad[0] } else { ad[i] };
            let y = if bd.len() == 1 { bd[0] } else { bd[i] };
            f(x, y)
        })
        .collect();
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Reduces a broadcast adjoint back to the operand's shape.
fn unbroadcast(grad: Tensor, target: &[usize]) -> Tensor {
    let n: usize = target.iter().product();
    if grad.len() == n {
        Tensor::new(target.to_vec(), grad.into_data()).expect("same numel")
    } else {
        Tensor::new(target.to_vec(), vec![grad.data().iter().sum()]).expect("scalar")
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records an input or parameter.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    /// Concatenates the flattened values of `parts`. Scalars give a vector;
    /// equally sized vectors give a `[parts, len]` matrix.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first_len = parts[0].value_len();
        let mut data = Vec::new();
        let mut uniform = true;
        for p in parts {
            let n = self.nodes.borrow();
            let v = &n[p.id].value;
            uniform &= v.len() == first_len;
            data.extend_from_slice(v.data());
        }
        let shape = if first_len == 1 || !uniform {
            vec![data.len()]
        } else {
            vec![parts.len(), first_len]
        };
        let value = Tensor::new(shape, data).expect("concat shape");
        self.push(Op::Concat(parts.iter().map(|p| p.id).collect()), value)
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, DiffError> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id].value;
        if !root.is_scalar() {
            return Err(DiffError::NonScalarLoss {
                shape: root.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; nodes.len()];
        adj[loss.id] = Some(Tensor::new(root.shape().to_vec(), vec![1.0]).expect("scalar"));

        fn acc(adj: &mut [Option<Tensor>], id: usize, g: Tensor) {
            match &mut adj[id] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].clone() else { continue };
            let node = &nodes[id];
            let val = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (sa, sb) = (nodes[*a].value.shape(), nodes[*b].value.shape());
                    acc(&mut adj, *a, unbroadcast(g.clone(), sa));
                    acc(&mut adj, *b, unbroadcast(g.clone(), sb));
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (nodes[*a].value.shape(), nodes[*b].value.shape());
                    acc(&mut adj, *a, unbroadcast(g.clone(), sa));
                    acc(&mut adj, *b, unbroadcast(g.map(|v| -v), sb));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let ga = zip_broadcast(&g, vb, |x, y| x * y);
                    let gb = zip_broadcast(&g, va, |x, y| x * y);
                    acc(&mut adj, *a, unbroadcast(ga, va.shape()));
                    acc(&mut adj, *b, unbroadcast(gb, vb.shape()));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let ga = zip_broadcast(&g, vb, |x, y| x / y);
                    // d(a/b)/db = -out / b
                    let q = zip_broadcast(val, vb, |o, y| -o / y);
                    let gb = zip_broadcast(&g, &q, |x, y| x * y);
                    acc(&mut adj, *a, unbroadcast(ga, va.shape()));
                    acc(&mut adj, *b, unbroadcast(gb, vb.shape()));
                }
                Op::Neg(a) => acc(&mut adj, *a, g.map(|v| -v)),
                Op::Scale(a, c) => acc(&mut adj, *a, g.map(|v| v * c)),
                Op::Offset(a) => acc(&mut adj, *a, g),
                Op::Exp(a) => acc(&mut adj, *a, zip_broadcast(&g, val, |x, y| x * y)),
                Op::Expm1(a) => acc(&mut adj, *a, zip_broadcast(&g, val, |x, y| x * (y + 1.0))),
                Op::Ln(a) => {
                    let va = &nodes[*a].value;
                    acc(&mut adj, *a, zip_broadcast(&g, va, |x, y| x / y));
                }
                Op::Powf(a, p) => {
                    let va = &nodes[*a].value;
                    let p = *p;
                    acc(&mut adj, *a, zip_broadcast(&g, va, |x, y| x * p * y.powf(p - 1.0)));
                }
                Op::Sqrt(a) => acc(&mut adj, *a, zip_broadcast(&g, val, |x, y| x * 0.5 / y)),
                Op::Abs(a) => {
                    let va = &nodes[*a].value;
                    acc(&mut adj, *a, zip_broadcast(&g, va, |x, y| x * sign(y)));
                }
                Op::Relu(a) => {
                    let va = &nodes[*a].value;
                    let ga = zip_broadcast(&g, va, |x, y| if y > 0.0 { x } else { 0.0 });
                    acc(&mut adj, *a, ga);
                }
                Op::Tanh(a) => acc(&mut adj, *a, zip_broadcast(&g, val, |x, y| x * (1.0 - y * y))),
                Op::Clamp(a, lo, hi) => {
                    let va = &nodes[*a].value;
                    let (lo, hi) = (*lo, *hi);
                    let ga = zip_broadcast(&g, va, |x, y| if y > lo && y < hi { x } else { 0.0 });
                    acc(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let va = &nodes[*a].value;
                    let gs = g.item();
                    acc(&mut adj, *a, va.map(|_| gs));
                }
                Op::LogSumExp(a) => {
                    let va = &nodes[*a].value;
                    let out = val.item();
                    let gs = g.item();
                    acc(&mut adj, *a, va.map(|y| gs * (y - out).exp()));
                }
                Op::Norm2(a) => {
                    let va = &nodes[*a].value;
                    let norm = val.item();
                    let gs = g.item();
                    let ga = if norm > 0.0 {
                        va.map(|y| gs * y / norm)
                    } else {
                        // any unit-ball element is a subgradient at zero
                        let u = 1.0 / (va.len() as f64).sqrt();
                        va.map(|_| gs * u)
                    };
                    acc(&mut adj, *a, ga);
                }
                Op::Index(a, i) => {
                    let mut ga = Tensor::zeros(nodes[*a].value.shape().to_vec());
                    ga.data_mut()[*i] = g.item();
                    acc(&mut adj, *a, ga);
                }
                Op::Row(a, r) => {
                    let va = &nodes[*a].value;
                    let c = va.cols();
                    let mut ga = Tensor::zeros(va.shape().to_vec());
                    ga.data_mut()[r * c..(r + 1) * c].copy_from_slice(g.data());
                    acc(&mut adj, *a, ga);
                }
                Op::Slice(a, start) => {
                    let mut ga = Tensor::zeros(nodes[*a].value.shape().to_vec());
                    ga.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                    acc(&mut adj, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let shape = nodes[*p].value.shape().to_vec();
                        let n: usize = shape.iter().product();
                        let piece = g.data()[offset..offset + n].to_vec();
                        offset += n;
                        acc(&mut adj, *p, Tensor::new(shape, piece).expect("concat piece"));
                    }
                }
                Op::MatMulT(x, w) => {
                    let (vx, vw) = (&nodes[*x].value, &nodes[*w].value);
                    let (n, inp) = (vx.rows(), vx.cols());
                    let out = vw.rows();
                    let gd = g.data();
                    let mut gx = vec![0.0; n * inp];
                    let mut gw = vec![0.0; out * inp];
                    for r in 0..n {
                        for o in 0..out {
                            let go = gd[r * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            for i in 0..inp {
                                gx[r * inp + i] += go * vw.data()[o * inp + i];
                                gw[o * inp + i] += go * vx.data()[r * inp + i];
                            }
                        }
                    }
                    acc(&mut adj, *x, Tensor::new(vx.shape().to_vec(), gx).expect("gx"));
                    acc(&mut adj, *w, Tensor::new(vw.shape().to_vec(), gw).expect("gw"));
                }
                Op::AddBias(y, b) => {
                    let vb = &nodes[*b].value;
                    let out = vb.len();
                    let mut gb = vec![0.0; out];
                    for (i, v) in g.data().iter().enumerate() {
                        gb[i % out] += v;
                    }
                    acc(&mut adj, *y, g.clone());
                    acc(&mut adj, *b, Tensor::new(vb.shape().to_vec(), gb).expect("gb"));
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            adjoints: adj,
            shapes,
        })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id).clone()
    }

    /// Value of a scalar node.
    pub fn item(&self) -> f64 {
        self.graph.value_of(self.id).item()
    }

    fn value_len(&self) -> usize {
        self.graph.value_of(self.id).len()
    }

    pub fn len(&self) -> usize {
        self.value_len()
    }

    pub fn is_empty(&self) -> bool {
        self.value_len() == 0
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let v = self.graph.value_of(self.id).map(f);
        self.graph.push(op, v)
    }

    fn binary(self, other: Var<'g>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'g> {
        let v = {
            let a = self.graph.value_of(self.id);
            let b = self.graph.value_of(other.id);
            zip_broadcast(&a, &b, f)
        };
        self.graph.push(op, v)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn expm1(self) -> Var<'g> {
        self.unary(Op::Expm1(self.id), f64::exp_m1)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(Op::Ln(self.id), f64::ln)
    }

    pub fn powf(self, p: f64) -> Var<'g> {
        self.unary(Op::Powf(self.id, p), |v| v.powf(p))
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn abs(self) -> Var<'g> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, c), |v| v * c)
    }

    pub fn offset(self, c: f64) -> Var<'g> {
        self.unary(Op::Offset(self.id), |v| v + c)
    }

    /// Elementwise clamp to `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        self.unary(Op::Clamp(self.id, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(self) -> Var<'g> {
        let s: f64 = self.graph.value_of(self.id).data().iter().sum();
        self.graph.push(Op::Sum(self.id), Tensor::scalar(s))
    }

    /// `log Σ exp(vᵢ)` with max-shift.
    pub fn logsumexp(self) -> Var<'g> {
        let v = {
            let t = self.graph.value_of(self.id);
            let m = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = t.data().iter().map(|x| (x - m).exp()).sum();
            m + s.ln()
        };
        self.graph.push(Op::LogSumExp(self.id), Tensor::scalar(v))
    }

    /// Euclidean norm of all entries.
    pub fn norm2(self) -> Var<'g> {
        let v = {
            let t = self.graph.value_of(self.id);
            t.data().iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        self.graph.push(Op::Norm2(self.id), Tensor::scalar(v))
    }

    /// Flat element `i` as a scalar.
    pub fn at(self, i: usize) -> Var<'g> {
        let v = self.graph.value_of(self.id).data()[i];
        self.graph.push(Op::Index(self.id, i), Tensor::scalar(v))
    }

    /// Row `r` of a matrix as a vector.
    pub fn row(self, r: usize) -> Var<'g> {
        let v = Tensor::vector(self.graph.value_of(self.id).row(r).to_vec());
        self.graph.push(Op::Row(self.id, r), v)
    }

    /// Contiguous flat range starting at `start`, reshaped to `shape`.
    pub fn slice(self, start: usize, shape: Vec<usize>) -> Var<'g> {
        let n: usize = shape.iter().product();
        let v = {
            let t = self.graph.value_of(self.id);
            Tensor::new(shape, t.data()[start..start + n].to_vec()).expect("slice shape")
        };
        self.graph.push(Op::Slice(self.id, start), v)
    }

    /// `self · wᵀ`; `self` is `[n, in]` (or a vector of length `in`), `w` is `[out, in]`.
    pub fn matmul_t(self, w: Var<'g>) -> Var<'g> {
        let y = {
            let x = self.graph.value_of(self.id);
            let wt = self.graph.value_of(w.id);
            assert_eq!(x.cols(), wt.cols(), "inner dimension mismatch");
            let (n, out, inp) = (x.rows(), wt.rows(), wt.cols());
            Tensor::matrix(n, out, matmul_t(x.data(), n, wt.data(), out, inp)).expect("matmul")
        };
        self.graph.push(Op::MatMulT(self.id, w.id), y)
    }

    /// Adds `b` (length `out`) to every row of `self` (`[n, out]`).
    pub fn add_bias(self, b: Var<'g>) -> Var<'g> {
        let y = {
            let x = self.graph.value_of(self.id);
            let bt = self.graph.value_of(b.id);
            assert_eq!(x.cols(), bt.len(), "bias length mismatch");
            let out = bt.len();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v + bt.data()[i % out])
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("bias")
        };
        self.graph.push(Op::AddBias(self.id, b.id), y)
    }
}

impl<'g> ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'g> ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'g> ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'g> ops::Div for Var<'g> {
    type Output = Var<'g>;
    fn div(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, Op::Div(self.id, rhs.id), |a, b| a / b)
    }
}

impl<'g> ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.unary(Op::Neg(self.id), |v| -v)
    }
}

impl<'g> ops::Mul<f64> for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: f64) -> Var<'g> {
        self.scale(rhs)
    }
}

impl<'g> ops::Add<f64> for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: f64) -> Var<'g> {
        self.offset(rhs)
    }
}

impl<'g> ops::Sub<f64> for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: f64) -> Var<'g> {
        self.offset(-rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let g = Graph::new();
        let w = g.leaf(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let x = g.leaf(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let y = x.matmul_t(w);
        let loss = (y * y).sum() * 0.5;
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).data(), &[4.0]);
        assert_eq!(grads.wrt(x).data(), &[2.0]);
    }

    #[test]
    fn linear_functional_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let w = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let loss = (w * x).sum();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn squared_norm_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -1.0]));
        let loss = (x * x).sum();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[2.0, -2.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.leaf(Tensor::vector(vec![5.0, 5.0, 5.0]));
        let grads = g.backward(x.sum()).unwrap();
        assert_eq!(grads.wrt(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let err = g.backward(x * 2.0).unwrap_err();
        assert!(matches!(err, DiffError::NonScalarLoss { .. }));
    }

    #[test]
    fn backward_leaves_values_untouched() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.5, -0.25]));
        let y = (x.tanh() * x).logsumexp();
        let before = y.item();
        g.backward(y).unwrap();
        assert_eq!(y.item(), before);
        assert_eq!(x.value().data(), &[0.5, -0.25]);
    }

    #[test]
    fn norm_subgradient_at_zero_is_unit() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0; 4]));
        let grads = g.backward(x.norm2()).unwrap();
        let gx = grads.wrt(x);
        let n: f64 = gx.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_is_stable() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1000.0, 1000.0]));
        let y = x.logsumexp();
        assert!((y.item() - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
