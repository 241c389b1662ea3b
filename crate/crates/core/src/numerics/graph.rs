use std::collections::HashMap;

use super::ops::{self, AttentionSpec, Op, Saved};
use super::{Gradients, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor<T>,
    saved: Saved<T>,
    requires_grad: bool,
}

/// Computation record: a topologically ordered tape of primitive
/// operations, with the intermediates needed for reverse-mode
/// differentiation.
#[derive(Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

/// Per-node gradients from one reverse pass.
#[derive(Debug)]
pub struct GradTable<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> GradTable<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    /// Saved softmax weights of an attention node, `[groups, heads, q, k]`.
    pub fn attention_weights(&self, v: Var) -> Option<&Tensor<T>> {
        match self.nodes[v.0].op {
            Op::Attention(_) => self.nodes[v.0].saved.tensors.first(),
            _ => None,
        }
    }

    /// Every attention node recorded so far.
    pub fn attention_nodes(&self) -> Vec<Var> {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i].op, Op::Attention(_))).map(Var).collect()
    }

    fn leaf(&mut self, op: Op, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, inputs: Vec::new(), value, saved: Saved::default(), requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Op::Constant, value, false)
    }

    /// Non-parameter input whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.leaf(Op::Variable, value, true)
    }

    /// Bind a named parameter from `store`; repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.get(name)?.clone();
        let v = self.leaf(Op::Param(name.to_string()), value, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameters bound so far, by name.
    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn push(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let (value, saved) = {
            let xs: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            ops::forward(&op, &xs).map_err(|e| annotate(e, self.nodes.len(), &op))?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { op, inputs: inputs.iter().map(|v| v.0).collect(), value, saved, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(c), &[a])
    }

    /// Broadcast-add a row vector to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow, &[a, row])
    }

    /// Broadcast-multiply every row by a row vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.push(Op::MulRow, &[a, row])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Gelu, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sigmoid, &[a])
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Softmax, &[a])
    }

    /// Row-wise normalisation to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.push(Op::LayerNorm { eps }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.push(Op::Reshape(shape.into()), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose, &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.push(Op::SliceCols { start, end }, &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of nothing".into()));
        }
        self.push(Op::ConcatCols, parts)
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        self.push(Op::GatherRows(rows), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows of nothing".into()));
        }
        self.push(Op::ConcatRows, parts)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Mean, &[a])
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Result<Var> {
        self.push(Op::Attention(spec), &[q, k, v])
    }

    /// Unfold a `[batch * len, c]` sequence into `[batch * len, kernel * c]`
    /// windows with zero "same" padding.
    pub fn im2col1d(&mut self, a: Var, batch: usize, len: usize, kernel: usize) -> Result<Var> {
        self.push(Op::Im2Col1d { batch, len, kernel }, &[a])
    }

    /// Unfold a `[batch * h * w, c]` image into `kh * kw * c` windows.
    pub fn im2col2d(&mut self, a: Var, batch: usize, h: usize, w: usize, kh: usize, kw: usize) -> Result<Var> {
        self.push(Op::Im2Col2d { batch, h, w, kh, kw }, &[a])
    }

    pub fn avg_pool2d(&mut self, a: Var, batch: usize, h: usize, w: usize, ph: usize, pw: usize) -> Result<Var> {
        self.push(Op::AvgPool2d { batch, h, w, ph, pw }, &[a])
    }

    /// Mean over consecutive blocks of `group` rows.
    pub fn mean_row_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        self.push(Op::MeanRowGroups { group }, &[a])
    }

    /// Replace rows where `mask` is set with `fill`.
    pub fn where_rows(&mut self, a: Var, fill: Var, mask: Vec<bool>) -> Result<Var> {
        self.push(Op::WhereRows(mask), &[a, fill])
    }

    /// `sum(weights * (pred - target)^2)`.
    pub fn weighted_sq_error(&mut self, pred: Var, target: Var, weights: Var) -> Result<Var> {
        self.push(Op::WeightedSqError, &[pred, target, weights])
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var> {
        self.push(Op::CrossEntropy(labels), &[logits])
    }

    /// Symmetric squared Chamfer distance, averaged over `groups` clouds.
    pub fn chamfer(&mut self, pred: Var, target: Var, groups: usize) -> Result<Var> {
        self.push(Op::Chamfer { groups }, &[pred, target])
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Reverse pass from `output` seeded with `seed`.
    pub fn backward(&self, output: Var, seed: &Tensor<T>) -> Result<GradTable<T>> {
        let out = &self.nodes[output.0];
        if out.value.shape() != seed.shape() {
            return Err(Error::Contract(format!(
                "seed gradient shape {:?} does not match entry #{} ({}) of shape {:?}",
                seed.shape(),
                output.0,
                out.op.name(),
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed.clone());
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if node.op.is_leaf() || !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            let xs: Vec<&Tensor<T>> = node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
            let need: Vec<bool> = node.inputs.iter().map(|&j| self.nodes[j].requires_grad).collect();
            let gx = ops::backward(&node.op, &xs, &node.value, &node.saved, &gy, &need)
                .map_err(|e| annotate(e, i, &node.op))?;
            for ((&j, g), &nd) in node.inputs.iter().zip(gx).zip(&need) {
                let Some(g) = g else { continue };
                if !nd {
                    continue;
                }
                if g.shape() != self.nodes[j].value.shape() {
                    return Err(Error::Contract(format!(
                        "entry #{i} ({}) produced gradient {:?} for input #{j} of shape {:?}",
                        node.op.name(),
                        g.shape(),
                        self.nodes[j].value.shape()
                    )));
                }
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
            grads[i] = Some(gy);
        }
        Ok(GradTable { grads })
    }

    /// Gradients for every parameter in `store`; parameters not reachable
    /// from `output` get zero tensors.
    pub fn backpropagate(&self, output: Var, seed: &Tensor<T>, store: &ParamStore<T>) -> Result<Gradients<T>> {
        let table = self.backward(output, seed)?;
        let mut out = Gradients::default();
        for (name, value) in store.iter() {
            let g = self
                .params
                .get(name)
                .and_then(|&v| table.wrt(v).cloned())
                .unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()));
            out.by_name.insert(name.to_string(), g);
        }
        Ok(out)
    }

    /// Gradients for the parameters bound on this graph only.
    pub fn bound_param_grads(&self, output: Var, seed: &Tensor<T>) -> Result<Gradients<T>> {
        let table = self.backward(output, seed)?;
        let mut out = Gradients::default();
        for (name, &v) in &self.params {
            let g = table.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(self.value(v).shape().to_vec()));
            out.by_name.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Re-execute the record up to `output`, substituting leaf values from
    /// `overrides`. With no overrides the result is bit-identical to the
    /// recorded value.
    pub fn replay(&self, output: Var, overrides: &[(Var, &Tensor<T>)]) -> Result<Tensor<T>> {
        let mut values: Vec<Option<Tensor<T>>> = (0..=output.0).map(|_| None).collect();
        for (v, t) in overrides {
            if !self.nodes[v.0].op.is_leaf() {
                return Err(Error::Contract(format!("entry #{} is not a leaf", v.0)));
            }
            if t.shape() != self.nodes[v.0].value.shape() {
                return Err(Error::shape("replay", format!("override for #{} has shape {:?}", v.0, t.shape())));
            }
        }
        for i in 0..=output.0 {
            let node = &self.nodes[i];
            if node.op.is_leaf() {
                continue;
            }
            let xs: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|&j| {
                    if let Some((_, t)) = overrides.iter().find(|(v, _)| v.0 == j) {
                        *t
                    } else if self.nodes[j].op.is_leaf() {
                        &self.nodes[j].value
                    } else {
                        values[j].as_ref().expect("topological order")
                    }
                })
                .collect();
            let (v, _) = ops::forward(&node.op, &xs).map_err(|e| annotate(e, i, &node.op))?;
            values[i] = Some(v);
        }
        Ok(match values[output.0].take() {
            Some(v) => v,
            None => overrides
                .iter()
                .find(|(v, _)| *v == output)
                .map(|(_, t)| (*t).clone())
                .unwrap_or_else(|| self.nodes[output.0].value.clone()),
        })
    }
}

fn annotate(e: Error, index: usize, op: &Op) -> Error {
    match e {
        Error::Shape { op: name, detail } => Error::Contract(format!("entry #{index} ({name}): {detail}")),
        Error::Contract(d) => Error::Contract(format!("entry #{index} ({}): {d}", op.name())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_is_two_x() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let t = g.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(t.wrt(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_output_gives_zero_parameter_gradient() {
        let mut store = ParamStore::<f64>::new();
        store.insert("x", Tensor::scalar(2.0)).unwrap();
        let mut g = Graph::new();
        let _x = g.param(&store, "x").unwrap();
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.scale(c, 2.0).unwrap();
        let grads = g.backpropagate(y, &Tensor::scalar(1.0), &store).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[0.0]);
    }

    #[test]
    fn seed_shape_mismatch_names_entry() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(Tensor::zeros([2, 2]));
        let y = g.relu(x).unwrap();
        let e = g.backward(y, &Tensor::zeros([3])).unwrap_err();
        assert!(e.to_string().contains("entry #1"), "{e}");
    }

    #[test]
    fn forward_shape_error_is_contract_violation() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([2, 3]));
        let e = g.matmul(a, b).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut g = Graph::<f32>::new();
        let x = g.variable(Tensor::from_fn([4, 4], |i| (i as f32 * 0.3).sin()));
        let w = g.constant(Tensor::from_fn([4, 4], |i| (i as f32 * 0.7).cos()));
        let y = g.matmul(x, w).unwrap();
        let z = g.softmax(y).unwrap();
        let z = g.layer_norm(z, 1e-5).unwrap();
        let s = g.mean(z).unwrap();
        let again = g.replay(s, &[]).unwrap();
        assert_eq!(again.data()[0].to_bits(), g.value(s).data()[0].to_bits());
    }
}
