use std::collections::HashMap;

use super::{add_in_place, axpy, dot, log_sum_exp, sigmoid, softmax_in_place, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        Gradients {
            values: self.values.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        }
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Gradients aligned one-to-one with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    values: Vec<Tensor<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.values.iter()
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            add_in_place(a.data_mut(), b.data());
        }
    }

    pub fn scale(&mut self, c: F) {
        for t in &mut self.values {
            for x in t.data_mut() {
                *x = *x * c;
            }
        }
    }

    pub fn global_norm(&self) -> F {
        let mut s = 0.0f64;
        for t in &self.values {
            for &x in t.data() {
                let x = x.to_f64();
                s += x * x;
            }
        }
        F::of(s.sqrt())
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm && norm > F::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    Row { src: NodeId, row: usize },
    Linear { w: NodeId, x: NodeId, b: Option<NodeId> },
    MatMulT { x: NodeId, w: NodeId },
    Add(NodeId, NodeId),
    AddRow { m: NodeId, q: NodeId },
    Mul(NodeId, NodeId),
    MulConst { x: NodeId, mask: Vec<F> },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Stack(Vec<NodeId>),
    Softmax { x: NodeId, temperature: F },
    WeightedSum { alpha: NodeId, h: NodeId },
    Maxout { x: NodeId, argmax: Vec<usize> },
    CrossEntropy { logits: NodeId, target: usize, probs: Vec<F> },
    Sum(Vec<NodeId>),
    Scale { x: NodeId, c: F },
    Dot(NodeId, NodeId),
    SumAll(NodeId),
}

struct Node<F> {
    op: Op<F>,
    value: Option<Tensor<F>>,
}

/// Tape of operations recorded in evaluation order. Parameters are read from
/// a borrowed [`ParamStore`] and never copied into the tape.
pub struct Graph<'p, F> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl<'p, F: Real> Graph<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        match &self.nodes[id.0].op {
            Op::Param(p) => self.params.get(*p),
            _ => self.nodes[id.0].value.as_ref().expect("node value"),
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    fn check_len(&self, operand: &'static str, id: NodeId, expected: usize) -> Result<()> {
        let actual = self.value(id).len();
        if actual != expected {
            return Err(Error::shape(operand, expected, actual));
        }
        Ok(())
    }

    pub fn input(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    /// Row `row` of a matrix node (embedding lookup).
    pub fn row(&mut self, src: NodeId, row: usize) -> Result<NodeId> {
        let m = self.value(src);
        if m.shape().len() != 2 || row >= m.rows() {
            return Err(Error::shape("row lookup", format!("row < {}", m.rows()), row));
        }
        let v = Tensor::vector(m.row(row).to_vec());
        Ok(self.push(Op::Row { src, row }, v))
    }

    /// `w x + b` for a matrix `w` of shape (r, c).
    pub fn linear(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let wm = self.value(w);
        let (r, c) = (wm.rows(), wm.cols());
        self.check_len("linear input", x, c)?;
        if let Some(b) = b {
            self.check_len("linear bias", b, r)?;
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            out.push(dot(wm.row(i), xv));
        }
        if let Some(b) = b {
            add_in_place(&mut out, self.value(b).data());
        }
        Ok(self.push(Op::Linear { w, x, b }, Tensor::vector(out)))
    }

    /// `x wᵀ` for `x` of shape (a, c) and `w` of shape (r, c).
    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xm, wm) = (self.value(x), self.value(w));
        if xm.cols() != wm.cols() {
            return Err(Error::shape("matmul_t", wm.cols(), xm.cols()));
        }
        let (a, r) = (xm.rows(), wm.rows());
        let mut out = Vec::with_capacity(a * r);
        for i in 0..a {
            for j in 0..r {
                out.push(dot(xm.row(i), wm.row(j)));
            }
        }
        let t = Tensor::matrix(a, r, out)?;
        Ok(self.push(Op::MatMulT { x, w }, t))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_len("add", b, self.value(a).len())?;
        let mut out = self.value(a).clone();
        add_in_place(out.data_mut(), self.value(b).data());
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Adds vector `q` to every row of matrix `m`.
    pub fn add_row(&mut self, m: NodeId, q: NodeId) -> Result<NodeId> {
        let cols = self.value(m).cols();
        self.check_len("add_row", q, cols)?;
        let mut out = self.value(m).clone();
        let qv = self.value(q).data();
        for row in out.data_mut().chunks_mut(cols) {
            add_in_place(row, qv);
        }
        Ok(self.push(Op::AddRow { m, q }, out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_len("mul", b, self.value(a).len())?;
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o = *o * y;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: NodeId, mask: Vec<F>) -> Result<NodeId> {
        self.check_len("mul_const", x, mask.len())?;
        let mut out = self.value(x).clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o = *o * m;
        }
        Ok(self.push(Op::MulConst { x, mask }, out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = sigmoid(*v);
        }
        self.push(Op::Sigmoid(x), out)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        self.push(Op::Tanh(x), out)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(out))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if start + len > v.len() {
            return Err(Error::shape("slice", format!("at least {}", start + len), v.len()));
        }
        let out = Tensor::vector(v.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice { x, start }, out))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows.first().ok_or_else(|| Error::shape("stack", "at least one row", 0))?;
        let d = self.value(*first).len();
        let mut out = Vec::with_capacity(d * rows.len());
        for &r in rows {
            self.check_len("stack row", r, d)?;
            out.extend_from_slice(self.value(r).data());
        }
        let t = Tensor::matrix(rows.len(), d, out)?;
        Ok(self.push(Op::Stack(rows.to_vec()), t))
    }

    /// `softmax(x / temperature)` over a vector.
    pub fn softmax(&mut self, x: NodeId, temperature: F) -> Result<NodeId> {
        if !(temperature > F::zero()) {
            return Err(Error::Config(format!("softmax temperature must be positive, got {temperature}")));
        }
        let mut out = self.value(x).clone();
        softmax_in_place(out.data_mut(), temperature);
        Ok(self.push(Op::Softmax { x, temperature }, out))
    }

    /// `Σ_a alpha[a] * h[a, :]` for `h` of shape (A, d).
    pub fn weighted_sum(&mut self, alpha: NodeId, h: NodeId) -> Result<NodeId> {
        let hm = self.value(h);
        self.check_len("weighted_sum weights", alpha, hm.rows())?;
        let av = self.value(alpha).data();
        let mut out = vec![F::zero(); hm.cols()];
        for (i, &a) in av.iter().enumerate() {
            axpy(a, hm.row(i), &mut out);
        }
        Ok(self.push(Op::WeightedSum { alpha, h }, Tensor::vector(out)))
    }

    /// Max over consecutive groups of `pool` entries.
    pub fn maxout(&mut self, x: NodeId, pool: usize) -> Result<NodeId> {
        let v = self.value(x).data();
        if pool == 0 || v.len() % pool != 0 {
            return Err(Error::shape("maxout", format!("multiple of {pool}"), v.len()));
        }
        let mut out = Vec::with_capacity(v.len() / pool);
        let mut argmax = Vec::with_capacity(v.len() / pool);
        for (g, chunk) in v.chunks(pool).enumerate() {
            let mut best = 0;
            for k in 1..pool {
                if chunk[k] > chunk[best] {
                    best = k;
                }
            }
            out.push(chunk[best]);
            argmax.push(g * pool + best);
        }
        Ok(self.push(Op::Maxout { x, argmax }, Tensor::vector(out)))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let v = self.value(logits).data();
        if target >= v.len() {
            return Err(Error::shape("cross_entropy target", format!("< {}", v.len()), target));
        }
        let lse = log_sum_exp(v);
        let loss = lse - v[target];
        let probs = v.iter().map(|&x| (x - lse).exp()).collect();
        Ok(self.push(Op::CrossEntropy { logits, target, probs }, Tensor::scalar(loss)))
    }

    /// Probabilities cached by a cross-entropy node.
    pub fn probabilities(&self, ce: NodeId) -> Option<&[F]> {
        match &self.nodes[ce.0].op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn sum(&mut self, scalars: &[NodeId]) -> Result<NodeId> {
        let mut s = F::zero();
        for &x in scalars {
            self.check_len("sum operand", x, 1)?;
            s = s + self.value(x).item();
        }
        Ok(self.push(Op::Sum(scalars.to_vec()), Tensor::scalar(s)))
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> NodeId {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = *v * c;
        }
        self.push(Op::Scale { x, c }, out)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_len("dot", b, self.value(a).len())?;
        let s = dot(self.value(a).data(), self.value(b).data());
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }
}

fn grad_buf<F: Real>(grads: &mut [Option<Vec<F>>], id: NodeId, len: usize) -> &mut Vec<F> {
    grads[id.0].get_or_insert_with(|| vec![F::zero(); len])
}

/// Reverse pass from a scalar `loss`. Every parameter gets a gradient,
/// zero when it is unreachable from the loss.
pub fn backward<F: Real>(graph: &Graph<'_, F>, loss: NodeId) -> Result<Gradients<F>> {
    let lv = graph.value(loss);
    if lv.len() != 1 {
        return Err(Error::shape("backward loss", "scalar", format!("{:?}", lv.shape())));
    }
    let mut pgrads = graph.params.zero_gradients();
    let mut grads: Vec<Option<Vec<F>>> = Vec::with_capacity(loss.0 + 1);
    grads.resize_with(loss.0 + 1, || None);
    grads[loss.0] = Some(vec![F::one()]);

    for i in (0..=loss.0).rev() {
        let Some(dy) = grads[i].take() else { continue };
        let node = &graph.nodes[i];
        match &node.op {
            Op::Input => {}
            Op::Param(p) => add_in_place(pgrads.values[p.0].data_mut(), &dy),
            Op::Row { src, row } => {
                let cols = graph.value(*src).cols();
                let len = graph.value(*src).len();
                let g = grad_buf(&mut grads, *src, len);
                add_in_place(&mut g[row * cols..(row + 1) * cols], &dy);
            }
            Op::Linear { w, x, b } => {
                let wm = graph.value(*w);
                let xv = graph.value(*x).data();
                let (r, c) = (wm.rows(), wm.cols());
                {
                    let gx = grad_buf(&mut grads, *x, c);
                    for (j, &d) in dy.iter().enumerate() {
                        if d != F::zero() {
                            axpy(d, wm.row(j), gx);
                        }
                    }
                }
                {
                    let gw = grad_buf(&mut grads, *w, r * c);
                    for (j, &d) in dy.iter().enumerate() {
                        if d != F::zero() {
                            axpy(d, xv, &mut gw[j * c..(j + 1) * c]);
                        }
                    }
                }
                if let Some(b) = b {
                    add_in_place(grad_buf(&mut grads, *b, r), &dy);
                }
            }
            Op::MatMulT { x, w } => {
                let (xm, wm) = (graph.value(*x), graph.value(*w));
                let (a, c, r) = (xm.rows(), xm.cols(), wm.rows());
                {
                    let gx = grad_buf(&mut grads, *x, a * c);
                    for i in 0..a {
                        let gxi = &mut gx[i * c..(i + 1) * c];
                        for j in 0..r {
                            axpy(dy[i * r + j], wm.row(j), gxi);
                        }
                    }
                }
                let gw = grad_buf(&mut grads, *w, r * c);
                for i in 0..a {
                    for j in 0..r {
                        axpy(dy[i * r + j], xm.row(i), &mut gw[j * c..(j + 1) * c]);
                    }
                }
            }
            Op::Add(a, b) => {
                add_in_place(grad_buf(&mut grads, *a, dy.len()), &dy);
                add_in_place(grad_buf(&mut grads, *b, dy.len()), &dy);
            }
            Op::AddRow { m, q } => {
                add_in_place(grad_buf(&mut grads, *m, dy.len()), &dy);
                let cols = graph.value(*q).len();
                let gq = grad_buf(&mut grads, *q, cols);
                for row in dy.chunks(cols) {
                    add_in_place(gq, row);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (graph.value(*a).data(), graph.value(*b).data());
                {
                    let ga = grad_buf(&mut grads, *a, dy.len());
                    for k in 0..dy.len() {
                        ga[k] = ga[k] + dy[k] * bv[k];
                    }
                }
                let gb = grad_buf(&mut grads, *b, dy.len());
                for k in 0..dy.len() {
                    gb[k] = gb[k] + dy[k] * av[k];
                }
            }
            Op::MulConst { x, mask } => {
                let gx = grad_buf(&mut grads, *x, dy.len());
                for k in 0..dy.len() {
                    gx[k] = gx[k] + dy[k] * mask[k];
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.as_ref().expect("value").data();
                let gx = grad_buf(&mut grads, *x, dy.len());
                for k in 0..dy.len() {
                    gx[k] = gx[k] + dy[k] * y[k] * (F::one() - y[k]);
                }
            }
            Op::Tanh(x) => {
                let y = node.value.as_ref().expect("value").data();
                let gx = grad_buf(&mut grads, *x, dy.len());
                for k in 0..dy.len() {
                    gx[k] = gx[k] + dy[k] * (F::one() - y[k] * y[k]);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = graph.value(*p).len();
                    add_in_place(grad_buf(&mut grads, *p, n), &dy[off..off + n]);
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let n = graph.value(*x).len();
                let gx = grad_buf(&mut grads, *x, n);
                add_in_place(&mut gx[*start..*start + dy.len()], &dy);
            }
            Op::Stack(rows) => {
                let d = dy.len() / rows.len();
                for (k, r) in rows.iter().enumerate() {
                    add_in_place(grad_buf(&mut grads, *r, d), &dy[k * d..(k + 1) * d]);
                }
            }
            Op::Softmax { x, temperature } => {
                let y = node.value.as_ref().expect("value").data();
                let s = dot(&dy, y);
                let inv_t = F::one() / *temperature;
                let gx = grad_buf(&mut grads, *x, dy.len());
                for k in 0..dy.len() {
                    gx[k] = gx[k] + y[k] * (dy[k] - s) * inv_t;
                }
            }
            Op::WeightedSum { alpha, h } => {
                let hm = graph.value(*h);
                let av = graph.value(*alpha).data();
                let (a, d) = (hm.rows(), hm.cols());
                {
                    let ga = grad_buf(&mut grads, *alpha, a);
                    for k in 0..a {
                        ga[k] = ga[k] + dot(hm.row(k), &dy);
                    }
                }
                let gh = grad_buf(&mut grads, *h, a * d);
                for k in 0..a {
                    axpy(av[k], &dy, &mut gh[k * d..(k + 1) * d]);
                }
            }
            Op::Maxout { x, argmax } => {
                let n = graph.value(*x).len();
                let gx = grad_buf(&mut grads, *x, n);
                for (j, &k) in argmax.iter().enumerate() {
                    gx[k] = gx[k] + dy[j];
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                let gl = grad_buf(&mut grads, *logits, probs.len());
                for k in 0..probs.len() {
                    gl[k] = gl[k] + dy[0] * probs[k];
                }
                gl[*target] = gl[*target] - dy[0];
            }
            Op::Sum(xs) => {
                for x in xs {
                    let g = grad_buf(&mut grads, *x, 1);
                    g[0] = g[0] + dy[0];
                }
            }
            Op::Scale { x, c } => {
                let gx = grad_buf(&mut grads, *x, dy.len());
                axpy(*c, &dy, gx);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (graph.value(*a).data(), graph.value(*b).data());
                axpy(dy[0], bv, grad_buf(&mut grads, *a, av.len()));
                axpy(dy[0], av, grad_buf(&mut grads, *b, bv.len()));
            }
            Op::SumAll(x) => {
                let n = graph.value(*x).len();
                let gx = grad_buf(&mut grads, *x, n);
                for g in gx.iter_mut() {
                    *g = *g + dy[0];
                }
            }
        }
    }
    for (id, g) in pgrads.values.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter {}",
                graph.params.name(ParamId(id))
            )));
        }
    }
    Ok(pgrads)
}
