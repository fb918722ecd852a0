//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive in evaluation order, so parents always
//! precede children and the backward pass is a single reverse sweep. A graph
//! lives for one optimizer step; parameters are copied in as trainable leaves.

use super::tensor::{matmul_a_bt, matmul_at_b, matmul_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Reduction axis for rank-2 tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Collapse rows: `m x n -> 1 x n`.
    Rows,
    /// Collapse columns: `m x n -> m x 1`.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Ln(usize),
    Mean(usize, Axis),
    SumAxis(usize, Axis),
    Sum(usize),
    L2Norm(usize),
    Concat(Vec<usize>),
    Scale(usize, f64),
    AddScalar(usize),
    Clamp(usize, f64, f64),
    NormalizeRows(usize),
    GatherRows(usize, Vec<usize>),
    Reverse(usize, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// How a right-hand operand is broadcast against the left one.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.is_scalar() {
        Ok(Broadcast::Scalar)
    } else if a.rank() == 2 && b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() {
        Ok(Broadcast::Row)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn binary(a: &Tensor, b: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let bd = b.data();
    let data: Vec<f64> = match kind {
        Broadcast::Same => a.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Scalar => a.data().iter().map(|&x| f(x, bd[0])).collect(),
        Broadcast::Row => {
            let c = a.cols();
            a.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bd[i % c]))
                .collect()
        }
    };
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

/// Sums an elementwise gradient back down to the broadcast operand's shape.
fn reduce_to(grad: &Tensor, kind: Broadcast, target: &Tensor) -> Tensor {
    match kind {
        Broadcast::Same => grad.clone(),
        Broadcast::Scalar => Tensor::full(target.shape(), grad.data().iter().sum()),
        Broadcast::Row => {
            let c = grad.cols();
            let mut out = vec![0.0; c];
            for row in grad.iter_rows() {
                for (o, g) in out.iter_mut().zip(row) {
                    *o += g;
                }
            }
            Tensor::new(target.shape().to_vec(), out).expect("row shape")
        }
    }
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() == 2 {
        Ok(())
    } else {
        Err(Error::shape(op, t.shape(), &[]))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[usize]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.nodes[p].needs_grad);
        self.push(value, op, needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows() {
            return Err(Error::shape("matmul", x.shape(), y.shape()));
        }
        let (m, k, n) = (x.rows(), x.cols(), y.cols());
        let mut out = vec![0.0; m * n];
        matmul_into(x.data(), y.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.derived(value, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    /// `a + b`; `b` may be a same-shape tensor, a `1 x n` row, or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let kind = broadcast_kind("add", x, y)?;
        let value = binary(x, y, kind, |p, q| p + q);
        Ok(self.derived(value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let kind = broadcast_kind("sub", x, y)?;
        let value = binary(x, y, kind, |p, q| p - q);
        Ok(self.derived(value, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let kind = broadcast_kind("mul", x, y)?;
        let value = binary(x, y, kind, |p, q| p * q);
        Ok(self.derived(value, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.derived(value, Op::Relu(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.derived(value, Op::Tanh(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.derived(value, Op::Sigmoid(a.0), &[a.0])
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.derived(value, Op::Ln(a.0), &[a.0])
    }

    pub fn mean_axis(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let value = reduce_axis("mean_axis", self.value(a), axis, true)?;
        Ok(self.derived(value, Op::Mean(a.0, axis), &[a.0]))
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let value = reduce_axis("sum_axis", self.value(a), axis, false)?;
        Ok(self.derived(value, Op::SumAxis(a.0, axis), &[a.0]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.derived(value, Op::Sum(a.0), &[a.0])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Euclidean norm of all elements, as a scalar. The gradient at the zero
    /// tensor is zero.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(norm(self.value(a).data()));
        self.derived(value, Op::L2Norm(a.0), &[a.0])
    }

    /// Concatenates rank-2 tensors along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rows = self.value(*first).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::shape("concat", self.value(*first).shape(), t.shape()));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.derived(value, Op::Concat(ids.clone()), &ids))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        self.derived(value, Op::Scale(a.0, factor), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, shift: f64) -> Var {
        let value = self.value(a).map(|v| v + shift);
        self.derived(value, Op::AddScalar(a.0), &[a.0])
    }

    /// `max(a, lo)` elementwise. Gradient passes only where `a > lo`.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.clamp(a, lo, f64::INFINITY)
    }

    /// Clamps into `[lo, hi]`. Gradient passes only strictly inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.derived(value, Op::Clamp(a.0, lo, hi), &[a.0])
    }

    /// Scales each row to unit Euclidean norm. Zero rows stay zero and pass
    /// zero gradient.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_rank2("normalize_rows", x)?;
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(x.cols()) {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.derived(value, Op::NormalizeRows(a.0), &[a.0]))
    }

    /// Row gather; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).select_rows(indices)?;
        Ok(self.derived(value, Op::GatherRows(a.0, indices.to_vec()), &[a.0]))
    }

    /// Identity in the forward pass; multiplies the incoming gradient by
    /// `-coefficient` in the backward pass.
    pub fn reverse_gradient(&mut self, a: Var, coefficient: f64) -> Var {
        let value = self.value(a).clone();
        self.derived(value, Op::Reverse(a.0, coefficient), &[a.0])
    }

    /// Dense `x W + b` for `x: m x in`, `W: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(x, weight)?;
        self.add(h, bias)
    }

    /// Per-row dot product, `m x n, m x n -> m x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("row_dot", self.shape(a), self.shape(b)));
        }
        let p = self.mul(a, b)?;
        self.sum_axis(p, Axis::Cols)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].as_ref() else {
                continue;
            };
            for (parent, contrib) in self.local_gradients(id, g) {
                if !self.nodes[parent].needs_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(contrib.data())
                        .for_each(|(a, c)| *a += c),
                    slot => *slot = Some(contrib),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Vector-Jacobian products of node `id` for its parents.
    fn local_gradients(&self, id: usize, g: &Tensor) -> Vec<(usize, Tensor)> {
        let node = &self.nodes[id];
        let val = |i: usize| &self.nodes[i].value;
        let want = |i: usize| self.nodes[i].needs_grad;
        let out = &node.value;
        let mut res = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if want(*a) {
                    let d = matmul_a_bt(g.data(), y.data(), m, n, k);
                    res.push((*a, Tensor::new(vec![m, k], d).unwrap()));
                }
                if want(*b) {
                    let d = matmul_at_b(x.data(), g.data(), k, m, n);
                    res.push((*b, Tensor::new(vec![k, n], d).unwrap()));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                res.push((*a, g.clone()));
                if want(*b) {
                    let kind = broadcast_kind("add", val(*a), val(*b)).unwrap();
                    let gb = reduce_to(&g.map(|v| v * sign), kind, val(*b));
                    res.push((*b, gb));
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let kind = broadcast_kind("mul", x, y).unwrap();
                if want(*a) {
                    res.push((*a, binary(g, y, kind, |gv, yv| gv * yv)));
                }
                if want(*b) {
                    let prod = zip_map(g, x, |gv, xv| gv * xv);
                    res.push((*b, reduce_to(&prod, kind, y)));
                }
            }
            Op::Relu(a) => res.push((*a, zip_map(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }))),
            Op::Tanh(a) => res.push((*a, zip_map(g, out, |gv, y| gv * (1.0 - y * y)))),
            Op::Sigmoid(a) => res.push((*a, zip_map(g, out, |gv, y| gv * y * (1.0 - y)))),
            Op::Ln(a) => res.push((*a, zip_map(g, val(*a), |gv, x| gv / x))),
            Op::Mean(a, axis) | Op::SumAxis(a, axis) => {
                let x = val(*a);
                let (m, n) = (x.rows(), x.cols());
                let denom = match (&node.op, axis) {
                    (Op::Mean(..), Axis::Rows) => m as f64,
                    (Op::Mean(..), Axis::Cols) => n as f64,
                    _ => 1.0,
                };
                let gd = g.data();
                let data = (0..m * n)
                    .map(|i| match axis {
                        Axis::Rows => gd[i % n] / denom,
                        Axis::Cols => gd[i / n] / denom,
                    })
                    .collect();
                res.push((*a, Tensor::new(vec![m, n], data).unwrap()));
            }
            Op::Sum(a) => res.push((*a, Tensor::full(val(*a).shape(), g.item()))),
            Op::L2Norm(a) => {
                let x = val(*a);
                let n = out.item();
                let gv = g.item();
                let d = if n > 0.0 { x.map(|v| gv * v / n) } else { Tensor::zeros(x.shape()) };
                res.push((*a, d));
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if want(p) {
                        let mut data = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        res.push((p, Tensor::new(vec![rows, w], data).unwrap()));
                    }
                    offset += w;
                }
            }
            Op::Scale(a, f) => res.push((*a, g.map(|v| v * f))),
            Op::AddScalar(a) => res.push((*a, g.clone())),
            Op::Clamp(a, lo, hi) => res.push((
                *a,
                zip_map(g, val(*a), |gv, x| if x > *lo && x < *hi { gv } else { 0.0 }),
            )),
            Op::NormalizeRows(a) => {
                let x = val(*a);
                let c = x.cols();
                let mut data = vec![0.0; x.len()];
                for r in 0..x.rows() {
                    let n = norm(x.row_slice(r));
                    if n == 0.0 {
                        continue;
                    }
                    let y = out.row_slice(r);
                    let gr = g.row_slice(r);
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        data[r * c + j] = (gr[j] - y[j] * dot) / n;
                    }
                }
                res.push((*a, Tensor::new(x.shape().to_vec(), data).unwrap()));
            }
            Op::GatherRows(a, idx) => {
                let x = val(*a);
                let c = x.cols();
                let mut data = vec![0.0; x.len()];
                for (k, &i) in idx.iter().enumerate() {
                    for (d, gv) in data[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *d += gv;
                    }
                }
                res.push((*a, Tensor::new(x.shape().to_vec(), data).unwrap()));
            }
            Op::Reverse(a, coef) => res.push((*a, g.map(|v| -coef * v))),
        }
        res
    }
}

fn zip_map(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(g.shape().to_vec(), data).unwrap()
}

fn reduce_axis(op: &'static str, x: &Tensor, axis: Axis, mean: bool) -> Result<Tensor> {
    require_rank2(op, x)?;
    let (m, n) = (x.rows(), x.cols());
    let (shape, data) = match axis {
        Axis::Rows => {
            let mut acc = vec![0.0; n];
            for row in x.iter_rows() {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            if mean {
                acc.iter_mut().for_each(|a| *a /= m as f64);
            }
            (vec![1, n], acc)
        }
        Axis::Cols => {
            let acc = x
                .iter_rows()
                .map(|row| {
                    let s: f64 = row.iter().sum();
                    if mean {
                        s / n as f64
                    } else {
                        s
                    }
                })
                .collect();
            (vec![m, 1], acc)
        }
    };
    Tensor::new(shape, data)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, if `v` was reached from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `graph.value(v)` when unreachable.
    pub fn wrt(&self, graph: &Graph, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.constant(t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let i = g.constant(Tensor::identity(3));
        let p = g.matmul(a, i).unwrap();
        assert_eq!(g.value(p), g.value(a));
    }

    #[test]
    fn shape_errors_name_primitive_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
        let c = g.constant(Tensor::zeros(&[3, 2]));
        let msg = g.add(a, c).unwrap_err().to_string();
        assert!(msg.contains("add") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn unit_normalize_then_norm_is_one() {
        let mut g = Graph::new();
        let v = g.constant(t(&[&[3.0, -4.0, 12.0]]));
        let u = g.normalize_rows(v).unwrap();
        let n = g.l2_norm(u);
        assert!((g.value(n).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).item(), 0.5);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2, 3], 0.7));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn zero_scaled_loss_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[4], 2.5));
        let z = g.scale(x, 0.0);
        let s = g.sum(z);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_gradient_at_three_four() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![3.0, 4.0]).unwrap());
        let n = g.l2_norm(x);
        let grads = g.backward(n).unwrap();
        let d = grads.get(x).unwrap().data().to_vec();
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] - 0.8).abs() < 1e-15);

        // central differences
        let f = |a: f64, b: f64| (a * a + b * b).sqrt();
        let h = 1e-6;
        let fd0 = (f(3.0 + h, 4.0) - f(3.0 - h, 4.0)) / (2.0 * h);
        let fd1 = (f(3.0, 4.0 + h) - f(3.0, 4.0 - h)) / (2.0 * h);
        assert!((fd0 - d[0]).abs() < 1e-8 && (fd1 - d[1]).abs() < 1e-8);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 2]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2], 1.0));
        let y = g.param(Tensor::full(&[3], 1.0));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(y).is_none());
        assert_eq!(grads.wrt(&g, y), Tensor::zeros(&[3]));
    }

    #[test]
    fn zero_row_normalization_is_guarded() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[0.0, 0.0], &[1.0, 1.0]]));
        let u = g.normalize_rows(x).unwrap();
        assert_eq!(g.value(u).row_slice(0), &[0.0, 0.0]);
        let s = g.sum(u);
        let grads = g.backward(s).unwrap();
        assert_eq!(&grads.get(x).unwrap().data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn hinge_kink_has_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![-1.0, 0.0, 2.0]).unwrap());
        let h = g.clamp_min(x, 0.0);
        let s = g.sum(h);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_splits_gradients() {
        // d/da of sum(W * concat(a, b)) must equal d/da of sum(W_a * a).
        let a0 = t(&[&[0.3, -0.2], &[1.1, 0.5]]);
        let b0 = t(&[&[0.7], &[-0.4]]);
        let w = t(&[&[2.0], &[-1.0], &[0.5]]);

        let mut g = Graph::new();
        let a = g.param(a0.clone());
        let b = g.param(b0);
        let wv = g.constant(w);
        let c = g.concat_cols(&[a, b]).unwrap();
        let y = g.matmul(c, wv).unwrap();
        let y = g.tanh(y);
        let s = g.sum(y);
        let joint = g.backward(s).unwrap().get(a).unwrap().clone();

        let mut h = Graph::new();
        let a = h.param(a0);
        let wa = h.constant(t(&[&[2.0], &[-1.0]]));
        let bias = h.constant(t(&[&[0.5 * 0.7], &[0.5 * -0.4]]));
        let y = h.matmul(a, wa).unwrap();
        let y = h.add(y, bias).unwrap();
        let y = h.tanh(y);
        let s = h.sum(y);
        let alone = h.backward(s).unwrap().get(a).unwrap().clone();
        for (p, q) in joint.data().iter().zip(alone.data()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn reversal_negates_and_scales() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]).unwrap());
        let r = g.reverse_gradient(x, 0.5);
        assert_eq!(g.value(r), g.value(x));
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-0.5, -0.5]);
    }

    #[test]
    fn broadcast_row_gradient_sums_over_batch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[3, 2], 1.0));
        let b = g.param(Tensor::row(vec![0.0, 0.0]).unwrap());
        let y = g.add(x, b).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 3.0]);
    }
}
