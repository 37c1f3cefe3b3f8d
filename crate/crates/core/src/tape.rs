//! Reverse-mode differentiation over vectors and matrices.
//!
//! A [`Tape`] records every primitive in evaluation order, so node indices are
//! already a topological order and backward is a single reverse sweep.
//! Parameter tensors are borrowed for the tape's lifetime rather than copied.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{GradBuffer, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dims {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Dims {
    fn len(self) -> usize {
        match self {
            Dims::Scalar => 1,
            Dims::Vector(n) => n,
            Dims::Matrix(r, c) => r * c,
        }
    }

    fn to_vec(self) -> Vec<usize> {
        match self {
            Dims::Scalar => vec![],
            Dims::Vector(n) => vec![n],
            Dims::Matrix(r, c) => vec![r, c],
        }
    }
}

enum Data<'p> {
    Borrowed(&'p [f64]),
    Owned(Vec<f64>),
}

impl Data<'_> {
    fn as_slice(&self) -> &[f64] {
        match self {
            Data::Borrowed(s) => s,
            Data::Owned(v) => v,
        }
    }
}

enum Op {
    Leaf,
    MatVec(Var, Var),
    Row(Var, usize),
    RowsSum(Var, Vec<usize>, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskMul(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    Cosine {
        a: Var,
        b: Var,
        norm_a: f64,
        norm_b: f64,
    },
    Softmax(Var, f64),
    LogSoftmaxAt {
        logits: Var,
        index: usize,
        beta: f64,
        probs: Vec<f64>,
    },
    WeightedSum(Vec<Var>, Vec<f64>),
}

struct Node<'p> {
    data: Data<'p>,
    dims: Dims,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when nothing flowed into it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, zero-filled when `var` did not participate.
    pub fn wrt(&self, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[var.0]],
        }
    }

    /// Gradients of `vars` (a model's bound parameters, in `params()` order).
    pub fn collect(&self, vars: &[Var]) -> GradBuffer {
        GradBuffer {
            grads: vars.iter().map(|&v| self.wrt(v)).collect(),
        }
    }

    /// Adds the gradient of `var` into `out` (no-op when nothing flowed).
    pub fn add_into(&self, var: Var, out: &mut [f64]) {
        if let Some(g) = self.get(var) {
            for (o, x) in out.iter_mut().zip(g) {
                *o += x;
            }
        }
    }
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Data<'p>, dims: Dims, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(data.as_slice().len(), dims.len());
        self.nodes.push(Node {
            data,
            dims,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> Dims {
        self.nodes[v.0].dims
    }

    /// Binds a parameter tensor as a leaf without copying it.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        let dims = match t.shape().len() {
            0 => Dims::Scalar,
            1 => Dims::Vector(t.len()),
            _ => Dims::Matrix(t.rows(), t.cols()),
        };
        self.push(
            Data::Borrowed(t.values()),
            dims,
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// A vector leaf that never receives gradient.
    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Data::Owned(values), Dims::Vector(n), Op::Leaf, false)
    }

    /// A vector leaf that does receive gradient (used by gradient checks).
    pub fn variable(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Data::Owned(values), Dims::Vector(n), Op::Leaf, true)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].data.as_slice()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.dims(v).to_vec()
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let (r, c) = match (self.dims(m), self.dims(x)) {
            (Dims::Matrix(r, c), Dims::Vector(n)) if n == c => (r, c),
            (a, b) => return Err(Error::shape("matvec", &a.to_vec(), &b.to_vec())),
        };
        let mv = self.value(m);
        let xv = self.value(x);
        let mut out = vec![0.0; r];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mv[i * c..(i + 1) * c];
            *o = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        let rg = self.rg(m) || self.rg(x);
        Ok(self.push(Data::Owned(out), Dims::Vector(r), Op::MatVec(m, x), rg))
    }

    /// Row `index` of a matrix (embedding lookup).
    pub fn row(&mut self, m: Var, index: usize) -> Result<Var> {
        let (r, c) = match self.dims(m) {
            Dims::Matrix(r, c) => (r, c),
            d => return Err(Error::shape("row", &d.to_vec(), &[index])),
        };
        if index >= r {
            return Err(Error::shape("row", &[r, c], &[index]));
        }
        let out = self.value(m)[index * c..(index + 1) * c].to_vec();
        let rg = self.rg(m);
        Ok(self.push(Data::Owned(out), Dims::Vector(c), Op::Row(m, index), rg))
    }

    /// `scale * Σ_i m[indices[i]]`: a bag of embedding rows.
    pub fn rows_sum(&mut self, m: Var, indices: &[usize], scale: f64) -> Result<Var> {
        let (r, c) = match self.dims(m) {
            Dims::Matrix(r, c) => (r, c),
            d => return Err(Error::shape("rows_sum", &d.to_vec(), &[indices.len()])),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::shape("rows_sum", &[r, c], &[bad]));
        }
        let mv = self.value(m);
        let mut out = vec![0.0; c];
        for &i in indices {
            for (o, x) in out.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        if scale != 1.0 {
            for o in &mut out {
                *o *= scale;
            }
        }
        let rg = self.rg(m);
        Ok(self.push(
            Data::Owned(out),
            Dims::Vector(c),
            Op::RowsSum(m, indices.to_vec(), scale),
            rg,
        ))
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<Dims> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Error::shape(op, &da.to_vec(), &db.to_vec()));
        }
        Ok(da)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Var> {
        let d = self.same_dims(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Data::Owned(out), d, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * k).collect();
        let d = self.dims(a);
        let rg = self.rg(a);
        self.push(Data::Owned(out), d, Op::Scale(a, k), rg)
    }

    fn unary(&mut self, a: Var, op: Op, f: fn(f64) -> f64) -> Var {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let d = self.dims(a);
        let rg = self.rg(a);
        self.push(Data::Owned(out), d, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            match self.dims(p) {
                Dims::Vector(_) | Dims::Scalar => out.extend_from_slice(self.value(p)),
                d => return Err(Error::shape("concat", &d.to_vec(), &[])),
            }
        }
        let n = out.len();
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Data::Owned(out),
            Dims::Vector(n),
            Op::Concat(parts.to_vec()),
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(Data::Owned(vec![s]), Dims::Scalar, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Data::Owned(vec![s]), Dims::Scalar, Op::Mean(a), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("dot", a, b)?;
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Data::Owned(vec![s]), Dims::Scalar, Op::Dot(a, b), rg))
    }

    /// Cosine similarity; defined as 0 (with zero gradient) if either norm is 0.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("cosine", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let (norm_a, norm_b) = (norm(va), norm(vb));
        let c = if norm_a == 0.0 || norm_b == 0.0 {
            0.0
        } else {
            va.iter().zip(vb).map(|(x, y)| x * y).sum::<f64>() / (norm_a * norm_b)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Data::Owned(vec![c]),
            Dims::Scalar,
            Op::Cosine {
                a,
                b,
                norm_a,
                norm_b,
            },
            rg,
        ))
    }

    /// softmax(beta * a).
    pub fn softmax(&mut self, a: Var, beta: f64) -> Var {
        let out = softmax(self.value(a), beta);
        let d = self.dims(a);
        let rg = self.rg(a);
        self.push(Data::Owned(out), d, Op::Softmax(a, beta), rg)
    }

    /// log softmax(beta * logits)[index] as a scalar.
    pub fn log_softmax_at(&mut self, logits: Var, index: usize, beta: f64) -> Result<Var> {
        let v = self.value(logits);
        if index >= v.len() {
            return Err(Error::shape("log_softmax_at", &[v.len()], &[index]));
        }
        let (lp, probs) = log_softmax_pick(v, index, beta);
        let rg = self.rg(logits);
        Ok(self.push(
            Data::Owned(vec![lp]),
            Dims::Scalar,
            Op::LogSoftmaxAt {
                logits,
                index,
                beta,
                probs,
            },
            rg,
        ))
    }

    /// Σ_i w_i · s_i over scalar nodes with constant weights.
    pub fn weighted_sum(&mut self, scalars: &[Var], weights: &[f64]) -> Result<Var> {
        if scalars.len() != weights.len() {
            return Err(Error::shape("weighted_sum", &[scalars.len()], &[weights.len()]));
        }
        let mut s = 0.0;
        for (&v, &w) in scalars.iter().zip(weights) {
            if self.dims(v) != Dims::Scalar {
                return Err(Error::shape("weighted_sum", &self.shape(v), &[]));
            }
            s += w * self.scalar(v);
        }
        let rg = scalars.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Data::Owned(vec![s]),
            Dims::Scalar,
            Op::WeightedSum(scalars.to_vec(), weights.to_vec()),
            rg,
        ))
    }

    /// Inverted dropout. Identity when not training or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.dims(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let d = self.dims(a);
        let rg = self.rg(a);
        Ok(self.push(Data::Owned(out), d, Op::MaskMul(a, mask), rg))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rd = self.dims(root);
        if rd.len() != 1 || matches!(rd, Dims::Matrix(..)) {
            return Err(Error::NonScalarRoot(rd.to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            lens: self.nodes.iter().map(|n| n.dims.len()).collect(),
        })
    }

    fn propagate(&self, node: &Node<'p>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.data.as_slice();
        let acc = |v: Var, grads: &mut [Option<Vec<f64>>]| -> Option<usize> {
            if self.nodes[v.0].requires_grad {
                let len = self.nodes[v.0].dims.len();
                grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                Some(v.0)
            } else {
                None
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatVec(m, x) => {
                let c = self.dims(*x).len();
                if let Some(mi) = acc(*m, grads) {
                    let xv = self.value(*x);
                    let gm = grads[mi].as_mut().unwrap();
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        let row = &mut gm[r * c..(r + 1) * c];
                        for (o, xj) in row.iter_mut().zip(xv) {
                            *o += gr * xj;
                        }
                    }
                }
                if let Some(xi) = acc(*x, grads) {
                    let mv = self.value(*m);
                    let gx = grads[xi].as_mut().unwrap();
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        let row = &mv[r * c..(r + 1) * c];
                        for (o, mj) in gx.iter_mut().zip(row) {
                            *o += gr * mj;
                        }
                    }
                }
            }
            Op::Row(m, index) => {
                if let Some(mi) = acc(*m, grads) {
                    let c = g.len();
                    let gm = grads[mi].as_mut().unwrap();
                    for (o, x) in gm[index * c..(index + 1) * c].iter_mut().zip(g) {
                        *o += x;
                    }
                }
            }
            Op::RowsSum(m, indices, scale) => {
                if let Some(mi) = acc(*m, grads) {
                    let c = g.len();
                    let gm = grads[mi].as_mut().unwrap();
                    for &i in indices {
                        for (o, x) in gm[i * c..(i + 1) * c].iter_mut().zip(g) {
                            *o += scale * x;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ai) = acc(*a, grads) {
                    add_scaled(grads[ai].as_mut().unwrap(), g, 1.0);
                }
                if let Some(bi) = acc(*b, grads) {
                    add_scaled(grads[bi].as_mut().unwrap(), g, sign);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ai) = acc(*a, grads) {
                    let bv = self.value(*b);
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, gi), bj) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bj;
                    }
                }
                if let Some(bi) = acc(*b, grads) {
                    let av = self.value(*a);
                    let gb = grads[bi].as_mut().unwrap();
                    for ((o, gi), aj) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * aj;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ai) = acc(*a, grads) {
                    add_scaled(grads[ai].as_mut().unwrap(), g, *k);
                }
            }
            Op::MaskMul(a, mask) => {
                if let Some(ai) = acc(*a, grads) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, gi), m) in ga.iter_mut().zip(g).zip(mask) {
                        *o += gi * m;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ai) = acc(*a, grads) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *o += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ai) = acc(*a, grads) {
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *o += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.dims(*p).len();
                    if let Some(pi) = acc(*p, grads) {
                        add_scaled(grads[pi].as_mut().unwrap(), &g[off..off + len], 1.0);
                    }
                    off += len;
                }
            }
            Op::Sum(a) => {
                if let Some(ai) = acc(*a, grads) {
                    for o in grads[ai].as_mut().unwrap() {
                        *o += g[0];
                    }
                }
            }
            Op::Mean(a) => {
                if let Some(ai) = acc(*a, grads) {
                    let ga = grads[ai].as_mut().unwrap();
                    let k = g[0] / ga.len() as f64;
                    for o in ga {
                        *o += k;
                    }
                }
            }
            Op::Dot(a, b) => {
                if let Some(ai) = acc(*a, grads) {
                    add_scaled(grads[ai].as_mut().unwrap(), self.value(*b), g[0]);
                }
                if let Some(bi) = acc(*b, grads) {
                    add_scaled(grads[bi].as_mut().unwrap(), self.value(*a), g[0]);
                }
            }
            Op::Cosine {
                a,
                b,
                norm_a,
                norm_b,
            } => {
                if *norm_a == 0.0 || *norm_b == 0.0 {
                    return;
                }
                let c = out[0];
                let (va, vb) = (self.value(*a), self.value(*b));
                let inv = 1.0 / (norm_a * norm_b);
                if let Some(ai) = acc(*a, grads) {
                    let k = c / (norm_a * norm_a);
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, x), y) in ga.iter_mut().zip(va).zip(vb) {
                        *o += g[0] * (y * inv - k * x);
                    }
                }
                if let Some(bi) = acc(*b, grads) {
                    let k = c / (norm_b * norm_b);
                    let gb = grads[bi].as_mut().unwrap();
                    for ((o, x), y) in gb.iter_mut().zip(va).zip(vb) {
                        *o += g[0] * (x * inv - k * y);
                    }
                }
            }
            Op::Softmax(a, beta) => {
                if let Some(ai) = acc(*a, grads) {
                    let gy: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                    let ga = grads[ai].as_mut().unwrap();
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *o += beta * y * (gi - gy);
                    }
                }
            }
            Op::LogSoftmaxAt {
                logits,
                index,
                beta,
                probs,
            } => {
                if let Some(li) = acc(*logits, grads) {
                    let gl = grads[li].as_mut().unwrap();
                    for (j, (o, p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *index { 1.0 } else { 0.0 };
                        *o += g[0] * beta * (onehot - p);
                    }
                }
            }
            Op::WeightedSum(vars, weights) => {
                for (v, w) in vars.iter().zip(weights) {
                    if let Some(vi) = acc(*v, grads) {
                        grads[vi].as_mut().unwrap()[0] += g[0] * w;
                    }
                }
            }
        }
    }
}

fn add_scaled(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// softmax(beta * x), shifted by the max for stability.
pub fn softmax(x: &[f64], beta: f64) -> Vec<f64> {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(beta * b));
    let mut out: Vec<f64> = x.iter().map(|v| (beta * v - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    out
}

/// Returns (log softmax(beta * x)[index], softmax(beta * x)).
pub fn log_softmax_pick(x: &[f64], index: usize, beta: f64) -> (f64, Vec<f64>) {
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(beta * b));
    let z: f64 = x.iter().map(|v| (beta * v - m).exp()).sum();
    let lse = m + z.ln();
    let probs = x.iter().map(|v| (beta * v - lse).exp()).collect();
    (beta * x[index] - lse, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cosine_examples() {
        let mut t = Tape::new();
        let u = t.constant(vec![1.0, 2.0]);
        let v = t.constant(vec![2.0, 1.0]);
        let c = t.cosine(u, v).unwrap();
        assert!(approx(t.scalar(c), 0.8, 1e-15));
        let c = t.cosine(u, u).unwrap();
        assert!(approx(t.scalar(c), 1.0, 1e-15));
        let e1 = t.constant(vec![1.0, 0.0]);
        let e2 = t.constant(vec![0.0, 1.0]);
        let c = t.cosine(e1, e2).unwrap();
        assert_eq!(t.scalar(c), 0.0);
        let z = t.zeros(2);
        let c = t.cosine(z, e1).unwrap();
        assert_eq!(t.scalar(c), 0.0);
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.variable(vec![3.0]);
        let y = t.variable(vec![2.0]);
        let p = t.mul(x, y).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x), vec![2.0]);
        assert_eq!(g.wrt(y), vec![3.0]);
    }

    #[test]
    fn unused_leaf_has_zero_grad() {
        let mut t = Tape::new();
        let x = t.variable(vec![1.0, 2.0]);
        let unused = t.variable(vec![5.0, 6.0, 7.0]);
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(unused), vec![0.0; 3]);
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let x = t.variable(vec![1.0, 2.0]);
        let y = t.tanh(x);
        assert!(matches!(t.backward(y), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn shape_errors_name_shapes() {
        let w = Tensor::zeros(vec![3, 4]);
        let mut t = Tape::new();
        let m = t.param(&w);
        let x = t.constant(vec![1.0; 3]);
        let err = t.matvec(m, x).unwrap_err().to_string();
        assert!(err.contains("[3, 4]") && err.contains("[3]"), "{err}");
        let a = t.constant(vec![1.0; 2]);
        assert!(t.add(a, x).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let x = t.constant(vec![1.0; 100_000]);
        assert_eq!(t.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.5, false, &mut rng).unwrap(), x);
        assert!(t.dropout(x, 1.0, true, &mut rng).is_err());
        let d = t.dropout(x, 0.3, true, &mut rng).unwrap();
        let mean = t.value(d).iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -3.0, 700.0, 2.5], 2.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
