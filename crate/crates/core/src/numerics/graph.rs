//! Per-forward-pass computation tape with reverse-mode differentiation.
//!
//! A [`Graph`] borrows the [`ParamStore`] for the duration of one forward
//! pass. Every operation appends a node holding its output value; calling
//! [`Graph::backward`] consumes the tape and returns the gradients of a
//! scalar loss with respect to parameters (and explicit inputs) as a
//! [`Gradients`] map, which the caller folds into the store with
//! [`ParamStore::accumulate`].
//!
//! Which leaves participate is decided up front by [`GradMode`]: under
//! `Trainable` the tape never computes gradients for frozen parameters, nor
//! for any sub-computation that depends only on frozen values.

use std::collections::{BTreeMap, HashMap};

use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Which leaves receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Inference only; `backward` is an error.
    None,
    /// Only trainable parameters and explicit inputs.
    Trainable,
    /// Every parameter regardless of its trainable flag.
    All,
}

enum Op<T> {
    Constant,
    Input,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Vec<Var>),
    Listwise { scores: Var, probs: Vec<T> },
}

struct Node<T> {
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by one [`Graph::backward`] call.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: BTreeMap<ParamId, Tensor<T>>,
    inputs: HashMap<Var, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(&id, g)| (id, g))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    /// Gradient for an explicit input created with [`Graph::input`].
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.inputs.get(&v)
    }

    pub fn scale(&mut self, c: T) {
        for g in self.params.values_mut().chain(self.inputs.values_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v = *v * c);
        }
    }

    /// Squared L2 norm over the parameter gradients accepted by `select`.
    pub fn sq_norm(&self, mut select: impl FnMut(ParamId) -> bool) -> f64 {
        self.params
            .iter()
            .filter(|(id, _)| select(**id))
            .flat_map(|(_, g)| g.data().iter())
            .map(|v| {
                let x = v.as_f64();
                x * x
            })
            .sum()
    }
}

pub struct Graph<'a, T: Real> {
    params: &'a ParamStore<T>,
    mode: GradMode,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new(params: &'a ParamStore<T>, mode: GradMode) -> Self {
        Self { params, mode, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn mode(&self) -> GradMode {
        self.mode
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node { value: Some(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node { value: Some(t), op: Op::Constant, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported through [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node { value: Some(t), op: Op::Input, requires_grad: self.mode != GradMode::None });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let requires_grad = match self.mode {
            GradMode::None => false,
            GradMode::Trainable => self.params.get(id).trainable(),
            GradMode::All => true,
        };
        self.nodes.push(Node { value: None, op: Op::Param(id), requires_grad });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::shape(op, s, &[0, 0]));
        }
        Ok((s[0], s[1]))
    }

    /// `a · b` for `a: n×k`, `b: k×p`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims(a, "matmul")?;
        let (k2, p) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = Tensor::zeros(&[n, p]);
        T::gemm(
            n,
            k,
            p,
            T::one(),
            self.value(a).data(),
            k,
            1,
            self.value(b).data(),
            p,
            1,
            T::zero(),
            out.data_mut(),
            p,
            1,
        );
        Ok(self.push(out, Op::MatMul { a, b, trans_b: false }, &[a, b]))
    }

    /// `a · bᵀ` for `a: n×k`, `b: p×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims(a, "matmul_t")?;
        let (p, k2) = self.matrix_dims(b, "matmul_t")?;
        if k != k2 {
            return Err(Error::shape("matmul_t", self.shape(a), self.shape(b)));
        }
        let mut out = Tensor::zeros(&[n, p]);
        T::gemm(
            n,
            k,
            p,
            T::one(),
            self.value(a).data(),
            k,
            1,
            self.value(b).data(),
            1,
            k,
            T::zero(),
            out.data_mut(),
            p,
            1,
        );
        Ok(self.push(out, Op::MatMul { a, b, trans_b: true }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds the vector `b` (length = columns of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let cols = self.value(a).cols();
        if self.value(b).len() != cols {
            return Err(Error::shape("add_row", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b).data();
        let data =
            self.value(a).data().chunks(cols.max(1)).flat_map(|row| row.iter().zip(bv).map(|(&x, &y)| x + y)).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Elementwise `max(0, x)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    /// Row-wise softmax over the last dimension with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let cols = x.cols();
        let mut data = x.data().to_vec();
        if cols > 0 {
            for row in data.chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Standardizes each row, then scales by `gamma` and shifts by `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if self.value(gamma).len() != d || self.value(beta).len() != d {
            return Err(Error::shape("layer_norm", xv.shape(), self.shape(gamma)));
        }
        let eps = T::from_f64(eps);
        let rows = xv.len().checked_div(d).unwrap_or(0);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        let n = T::from_f64(d as f64);
        for row in xv.data().chunks(d.max(1)).take(rows) {
            let mean0 = row.iter().copied().sum::<T>() / n;
            // One correction pass makes the mean exact for constant rows.
            let mean = mean0 + row.iter().map(|&v| v - mean0).sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * is;
                xhat.push(xh);
                out.push(g[j] * xh + b[j]);
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = self.matrix_dims(table, "gather")?;
        if let Some((pos, &bad)) = ids.iter().enumerate().find(|(_, &i)| i >= vocab) {
            return Err(Error::Input(format!("id {bad} at position {pos} out of range for table of {vocab} rows")));
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(out, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "slice_cols")?;
        if start + len > c {
            return Err(Error::shape("slice_cols", &[r, c], &[start, len]));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let out = Tensor::new(vec![r, len], data)?;
        Ok(self.push(out, Op::SliceCols { a, start }, &[a]))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "slice_rows")?;
        if start + len > r {
            return Err(Error::shape("slice_rows", &[r, c], &[start, len]));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(vec![len, c], data)?;
        Ok(self.push(out, Op::SliceRows { a, start }, &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let (r, _) = self.matrix_dims(first, "concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.matrix_dims(p, "concat_cols")?;
            if pr != r {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let v = self.value(p);
                data.extend_from_slice(v.row(i));
            }
        }
        let out = Tensor::new(vec![r, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, c) = self.matrix_dims(first, "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.matrix_dims(p, "concat_rows")?;
            if pc != c {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pr;
        }
        let mut data = Vec::with_capacity(rows * c);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, c], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(Error::Contract("mean of nothing".into()));
        }
        let mut acc = T::zero();
        for &s in scalars {
            acc = acc + self.value(s).item()?;
        }
        let m = acc / T::from_f64(scalars.len() as f64);
        Ok(self.push(Tensor::scalar(m), Op::Mean(scalars.to_vec()), scalars))
    }

    /// Dot product of two single-row matrices, as a `1×1` node.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b)
    }

    /// Softmax cross-entropy with the target at index 0:
    /// `-log(exp(s0) / sum_j exp(sj))`, computed with max subtraction.
    pub fn listwise_loss(&mut self, scores: Var) -> Result<Var> {
        let s = self.value(scores).data();
        if s.len() < 2 {
            return Err(Error::Contract(format!(
                "listwise loss needs a positive and at least one negative, got {} scores",
                s.len()
            )));
        }
        let (loss, probs) = listwise_forward(s);
        Ok(self.push(Tensor::scalar(loss), Op::Listwise { scores, probs }, &[scores]))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.mode == GradMode::None {
            return Err(Error::Contract("backward on an inference-only graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut out = Gradients { params: BTreeMap::new(), inputs: HashMap::new() };
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Input => {
                    let shape = self.nodes[i].value.as_ref().unwrap().shape().to_vec();
                    out.inputs.insert(Var(i), Tensor::new(shape, gy)?);
                }
                Op::Param(id) => {
                    let shape = self.params.value(*id).shape().to_vec();
                    out.params.insert(*id, Tensor::new(shape, gy)?);
                }
                Op::MatMul { a, b, trans_b } => {
                    let (n, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    if !*trans_b {
                        let p = self.shape(*b)[1];
                        if self.needs(*a) {
                            // dA = dC · Bᵀ
                            let ga = slot(&mut grads, *a, n * k);
                            T::gemm(n, p, k, T::one(), &gy, p, 1, bv, 1, p, T::one(), ga, k, 1);
                        }
                        if self.needs(*b) {
                            // dB = Aᵀ · dC
                            let gb = slot(&mut grads, *b, k * p);
                            T::gemm(k, n, p, T::one(), av, 1, k, &gy, p, 1, T::one(), gb, p, 1);
                        }
                    } else {
                        let p = self.shape(*b)[0];
                        if self.needs(*a) {
                            // dA = dC · B
                            let ga = slot(&mut grads, *a, n * k);
                            T::gemm(n, p, k, T::one(), &gy, p, 1, bv, k, 1, T::one(), ga, k, 1);
                        }
                        if self.needs(*b) {
                            // dB = dCᵀ · A
                            let gb = slot(&mut grads, *b, p * k);
                            T::gemm(p, n, k, T::one(), &gy, 1, p, av, k, 1, T::one(), gb, k, 1);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            add_into(slot(&mut grads, v, gy.len()), &gy);
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    if self.needs(*a) {
                        add_into(slot(&mut grads, *a, gy.len()), &gy);
                    }
                    if self.needs(*b) {
                        let cols = self.value(*b).len();
                        let gb = slot(&mut grads, *b, cols);
                        if cols > 0 {
                            for row in gy.chunks(cols) {
                                add_into(gb, row);
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let bv = self.value(*b).data();
                        let ga = slot(&mut grads, *a, gy.len());
                        for ((g, &d), &y) in ga.iter_mut().zip(&gy).zip(bv) {
                            *g = *g + d * y;
                        }
                    }
                    if self.needs(*b) {
                        let av = self.value(*a).data();
                        let gb = slot(&mut grads, *b, gy.len());
                        for ((g, &d), &x) in gb.iter_mut().zip(&gy).zip(av) {
                            *g = *g + d * x;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if self.needs(*a) {
                        let ga = slot(&mut grads, *a, gy.len());
                        for (g, &d) in ga.iter_mut().zip(&gy) {
                            *g = *g + d * *c;
                        }
                    }
                }
                Op::Relu(a) => {
                    if self.needs(*a) {
                        let xv = self.value(*a).data();
                        let ga = slot(&mut grads, *a, gy.len());
                        for ((g, &d), &x) in ga.iter_mut().zip(&gy).zip(xv) {
                            if x > T::zero() {
                                *g = *g + d;
                            }
                        }
                    }
                }
                Op::Softmax(a) => {
                    if self.needs(*a) {
                        let y = self.nodes[i].value.as_ref().unwrap();
                        let cols = y.cols();
                        let yd = y.data();
                        let ga = slot(&mut grads, *a, gy.len());
                        if cols > 0 {
                            for ((grow, dyrow), yrow) in ga.chunks_mut(cols).zip(gy.chunks(cols)).zip(yd.chunks(cols)) {
                                let s: T = dyrow.iter().zip(yrow).map(|(&d, &y)| d * y).sum();
                                for ((g, &d), &y) in grow.iter_mut().zip(dyrow).zip(yrow) {
                                    *g = *g + y * (d - s);
                                }
                            }
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let d = self.value(*gamma).len();
                    if d == 0 {
                        continue;
                    }
                    if self.needs(*beta) {
                        let gb = slot(&mut grads, *beta, d);
                        for row in gy.chunks(d) {
                            add_into(gb, row);
                        }
                    }
                    if self.needs(*gamma) {
                        let gg = slot(&mut grads, *gamma, d);
                        for (row, xr) in gy.chunks(d).zip(xhat.chunks(d)) {
                            for ((g, &dy), &xh) in gg.iter_mut().zip(row).zip(xr) {
                                *g = *g + dy * xh;
                            }
                        }
                    }
                    if self.needs(*x) {
                        let gam = self.value(*gamma).data();
                        let n = T::from_f64(d as f64);
                        let gx = slot(&mut grads, *x, gy.len());
                        let mut dxhat = vec![T::zero(); d];
                        for (((grow, dyrow), xr), &is) in
                            gx.chunks_mut(d).zip(gy.chunks(d)).zip(xhat.chunks(d)).zip(inv_std)
                        {
                            let mut m1 = T::zero();
                            let mut m2 = T::zero();
                            for j in 0..d {
                                dxhat[j] = dyrow[j] * gam[j];
                                m1 = m1 + dxhat[j];
                                m2 = m2 + dxhat[j] * xr[j];
                            }
                            m1 = m1 / n;
                            m2 = m2 / n;
                            for j in 0..d {
                                grow[j] = grow[j] + is * (dxhat[j] - m1 - xr[j] * m2);
                            }
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    if self.needs(*table) {
                        let d = self.shape(*table)[1];
                        let len = self.value(*table).len();
                        let gt = slot(&mut grads, *table, len);
                        for (row, &id) in gy.chunks(d.max(1)).zip(ids) {
                            add_into(&mut gt[id * d..(id + 1) * d], row);
                        }
                    }
                }
                Op::SliceCols { a, start } => {
                    if self.needs(*a) {
                        let c = self.shape(*a)[1];
                        let len = self.shape(Var(i))[1];
                        let total = self.value(*a).len();
                        let ga = slot(&mut grads, *a, total);
                        if len > 0 {
                            for (r, row) in gy.chunks(len).enumerate() {
                                add_into(&mut ga[r * c + start..r * c + start + len], row);
                            }
                        }
                    }
                }
                Op::SliceRows { a, start } => {
                    if self.needs(*a) {
                        let c = self.shape(*a)[1];
                        let total = self.value(*a).len();
                        let ga = slot(&mut grads, *a, total);
                        add_into(&mut ga[start * c..start * c + gy.len()], &gy);
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = self.shape(Var(i))[1];
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.shape(p)[1];
                        if self.needs(p) {
                            let len = self.value(p).len();
                            let gp = slot(&mut grads, p, len);
                            if pc > 0 {
                                for (r, grow) in gp.chunks_mut(pc).enumerate() {
                                    add_into(grow, &gy[r * total + off..r * total + off + pc]);
                                }
                            }
                        }
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.needs(p) {
                            add_into(slot(&mut grads, p, len), &gy[off..off + len]);
                        }
                        off += len;
                    }
                }
                Op::Sum(a) => {
                    if self.needs(*a) {
                        let len = self.value(*a).len();
                        let ga = slot(&mut grads, *a, len);
                        for g in ga.iter_mut() {
                            *g = *g + gy[0];
                        }
                    }
                }
                Op::Mean(parts) => {
                    let share = gy[0] / T::from_f64(parts.len() as f64);
                    for &p in parts {
                        if self.needs(p) {
                            let gp = slot(&mut grads, p, 1);
                            gp[0] = gp[0] + share;
                        }
                    }
                }
                Op::Listwise { scores, probs } => {
                    if self.needs(*scores) {
                        let gs = slot(&mut grads, *scores, probs.len());
                        for (j, (g, &p)) in gs.iter_mut().zip(probs).enumerate() {
                            let target = if j == 0 { T::one() } else { T::zero() };
                            *g = *g + gy[0] * (p - target);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z = z + *v;
    }
    for v in row.iter_mut() {
        *v = *v / z;
    }
}

/// Loss and softmax probabilities for target index 0.
pub(crate) fn listwise_forward<T: Real>(scores: &[T]) -> (T, Vec<T>) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let loss = z.ln() - (scores[0] - max);
    let probs = exps.into_iter().map(|e| e / z).collect();
    (loss, probs)
}
