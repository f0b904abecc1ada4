//! Reverse-mode gradient tape.
//!
//! Every operation appends a node holding its output value and enough
//! information to push gradients back to its inputs. Nodes are only ever
//! appended, so the node list is already in topological order and the
//! backward pass is a single reverse sweep.

use std::ops::Range;

use crate::error::{NnError, Result};
use crate::store::{ParamId, ParameterStore};
use crate::tensor::Tensor;
use crate::{log_sigmoid, sigmoid, softplus};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    LogSigmoid(Var),
    Softplus(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    Column(Var, usize),
    StopGradient,
    Sum(Var),
    /// Scalar-valued fused op whose gradient w.r.t. its single input was
    /// computed during the forward pass.
    Fused { input: Var, local_grad: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-threaded recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> NnError {
    NnError::Shape { op, detail }
}

impl Tape {
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

    /// Whether gradients can flow into `v` from a loss.
    pub fn tracks_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a constant.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Input, false)
    }

    /// Records a snapshot of a stored parameter.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let t = store.get(id);
        let needs = t.requires_grad();
        self.push(t.detached(), Op::Param(id), needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.value(a).dims();
        let (k2, m) = self.value(b).dims();
        if k != k2 {
            return Err(shape_err(
                "matmul",
                format!("[{n}, {k}] x [{k2}, {m}]"),
            ));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                for (o, bb) in row.iter_mut().zip(brow) {
                    *o += x * bb;
                }
            }
        }
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(n, m, out), Op::MatMul(a, b), needs))
    }

    /// `a[n, m] + bias[1, m]` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.value(a).dims();
        let bv = self.value(bias);
        if bv.len() != m {
            return Err(shape_err(
                "add_bias",
                format!("bias of {} values for width {m}", bv.len()),
            ));
        }
        let bv = bv.values();
        let mut out = self.value(a).values().to_vec();
        for row in out.chunks_exact_mut(m.max(1)) {
            for (o, b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        let needs = self.ng(a) || self.ng(bias);
        Ok(self.push(Tensor::matrix(n, m, out), Op::AddBias(a, bias), needs))
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = self.value(a).dims();
        let db = self.value(b).dims();
        if da != db {
            return Err(shape_err(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (n, m) = self.value(a).dims();
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(n, m, out), op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (n, m) = self.value(a).dims();
        let out: Vec<f64> = self.value(a).values().iter().map(|&x| f(x)).collect();
        let needs = self.ng(a);
        self.push(Tensor::matrix(n, m, out), op, needs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::LogSigmoid(a), log_sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    /// Identical values; no gradient flows back through the result.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = self.value(a).detached();
        self.push(v, Op::StopGradient, false)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ma) = self.value(a).dims();
        let (n2, mb) = self.value(b).dims();
        if n != n2 {
            return Err(shape_err("concat_cols", format!("{n} rows vs {n2} rows")));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let m = ma + mb;
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            out.extend_from_slice(&av[i * ma..(i + 1) * ma]);
            out.extend_from_slice(&bv[i * mb..(i + 1) * mb]);
        }
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(n, m, out), Op::ConcatCols(a, b), needs))
    }

    /// Output row `r` is row `indices[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (n, m) = self.value(a).dims();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather_rows", format!("row {bad} of {n}")));
        }
        let av = self.value(a).values();
        let mut out = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            out.extend_from_slice(&av[i * m..(i + 1) * m]);
        }
        let needs = self.ng(a);
        Ok(self.push(
            Tensor::matrix(indices.len(), m, out),
            Op::GatherRows(a, indices.to_vec()),
            needs,
        ))
    }

    /// Column `j` as an `[n, 1]` tensor.
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let (n, m) = self.value(a).dims();
        if j >= m {
            return Err(shape_err("column", format!("column {j} of {m}")));
        }
        let av = self.value(a).values();
        let out: Vec<f64> = (0..n).map(|i| av[i * m + j]).collect();
        let needs = self.ng(a);
        Ok(self.push(Tensor::matrix(n, 1, out), Op::Column(a, j), needs))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).values().iter().sum();
        let needs = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    fn fused(&mut self, input: Var, loss: f64, local_grad: Vec<f64>) -> Var {
        let needs = self.ng(input);
        self.push(Tensor::scalar(loss), Op::Fused { input, local_grad }, needs)
    }

    fn check_column(&self, op: &'static str, v: Var, n: usize) -> Result<()> {
        let (r, c) = self.value(v).dims();
        if c != 1 || r != n {
            return Err(shape_err(op, format!("expected [{n}, 1], got [{r}, {c}]")));
        }
        Ok(())
    }

    /// Grouped softmax cross-entropy.
    ///
    /// Within each group of rows, every row flagged in `positives` adds
    /// `-ln softmax(scores)[row]` over that group. The total is scaled by
    /// `weight`. Groups without positives contribute nothing.
    pub fn listwise_softmax_loss(
        &mut self,
        scores: Var,
        groups: &[Range<usize>],
        positives: &[bool],
        weight: f64,
    ) -> Result<Var> {
        let n = positives.len();
        self.check_column("listwise_softmax_loss", scores, n)?;
        let s = self.value(scores).values();
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        for g in groups {
            if g.is_empty() || g.end > n {
                return Err(shape_err(
                    "listwise_softmax_loss",
                    format!("group {g:?} invalid for {n} rows"),
                ));
            }
            let npos = positives[g.clone()].iter().filter(|&&p| p).count();
            if npos == 0 {
                continue;
            }
            let max = s[g.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s[g.clone()].iter().map(|&x| (x - max).exp()).sum();
            let lse = max + z.ln();
            for j in g.clone() {
                let p = (s[j] - lse).exp();
                grad[j] = weight * (npos as f64 * p - if positives[j] { 1.0 } else { 0.0 });
                if positives[j] {
                    loss -= weight * (s[j] - lse);
                }
            }
        }
        Ok(self.fused(scores, loss, grad))
    }

    /// Mean binary cross-entropy with logits over rows where `mask` holds.
    /// Zero eligible rows gives exactly zero.
    pub fn masked_bce_with_logits(
        &mut self,
        logits: Var,
        targets: &[bool],
        mask: &[bool],
    ) -> Result<Var> {
        let n = targets.len();
        if mask.len() != n {
            return Err(shape_err(
                "masked_bce_with_logits",
                format!("{} targets vs {} mask entries", n, mask.len()),
            ));
        }
        self.check_column("masked_bce_with_logits", logits, n)?;
        let z = self.value(logits).values();
        let count = mask.iter().filter(|&&m| m).count();
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        if count > 0 {
            let inv = 1.0 / count as f64;
            for i in (0..n).filter(|&i| mask[i]) {
                let t = if targets[i] { 1.0 } else { 0.0 };
                loss += softplus(z[i]) - t * z[i];
                grad[i] = (sigmoid(z[i]) - t) * inv;
            }
            loss *= inv;
        }
        Ok(self.fused(logits, loss, grad))
    }

    /// Pairwise logistic loss: the mean over all within-group pairs with
    /// `grades[i] > grades[j]` of `-ln sigmoid(s_i - s_j)`. No pairs gives
    /// exactly zero.
    pub fn pairwise_logistic_loss(
        &mut self,
        scores: Var,
        groups: &[Range<usize>],
        grades: &[u8],
    ) -> Result<Var> {
        let n = grades.len();
        self.check_column("pairwise_logistic_loss", scores, n)?;
        let s = self.value(scores).values();
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for g in groups {
            if g.end > n {
                return Err(shape_err(
                    "pairwise_logistic_loss",
                    format!("group {g:?} invalid for {n} rows"),
                ));
            }
            for i in g.clone() {
                for j in g.clone() {
                    if grades[i] > grades[j] {
                        let d = s[i] - s[j];
                        loss -= log_sigmoid(d);
                        let w = sigmoid(-d);
                        grad[i] -= w;
                        grad[j] += w;
                        pairs += 1;
                    }
                }
            }
        }
        if pairs > 0 {
            let inv = 1.0 / pairs as f64;
            loss *= inv;
            grad.iter_mut().for_each(|g| *g *= inv);
        }
        Ok(self.fused(scores, loss, grad))
    }

    /// Propagates d(loss)/d(node) back through the tape and writes the
    /// parameter gradients into `store`.
    ///
    /// Every trainable parameter in `store` ends up with a gradient buffer;
    /// parameters not reachable from `loss` get exact zeros.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NnError::NonScalarLoss(lv.shape().to_vec()));
        }
        store.zero_grads();
        if !self.ng(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads, store);
        }
        Ok(())
    }

    fn propagate(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        store: &mut ParameterStore,
    ) {
        match &node.op {
            Op::Input | Op::StopGradient => {}
            Op::Param(id) => store.accumulate_grad(*id, g),
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims();
                let m = self.value(*b).cols();
                if self.ng(*a) {
                    let bv = self.value(*b).values();
                    let da = acc(grads, *a, n * k);
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            da[i * k + p] += dot(grow, brow);
                        }
                    }
                }
                if self.ng(*b) {
                    let av = self.value(*a).values();
                    let db = acc(grads, *b, k * m);
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (d, gg) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += x * gg;
                            }
                        }
                    }
                }
            }
            Op::AddBias(a, b) => {
                let m = self.value(*a).cols();
                if self.ng(*a) {
                    add_into(acc(grads, *a, g.len()), g);
                }
                if self.ng(*b) {
                    let db = acc(grads, *b, m);
                    for row in g.chunks_exact(m.max(1)) {
                        add_into(db, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if self.ng(*a) {
                    add_into(acc(grads, *a, g.len()), g);
                }
                if self.ng(*b) {
                    add_into(acc(grads, *b, g.len()), g);
                }
            }
            Op::Sub(a, b) => {
                if self.ng(*a) {
                    add_into(acc(grads, *a, g.len()), g);
                }
                if self.ng(*b) {
                    for (d, x) in acc(grads, *b, g.len()).iter_mut().zip(g) {
                        *d -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = self.value(*b).values();
                    for ((d, x), y) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                }
                if self.ng(*b) {
                    let av = self.value(*a).values();
                    for ((d, x), y) in acc(grads, *b, g.len()).iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                }
            }
            Op::Scale(a, c) => {
                for (d, x) in acc(grads, *a, g.len()).iter_mut().zip(g) {
                    *d += c * x;
                }
            }
            Op::Relu(a) => {
                let out = node.value.values();
                for ((d, x), y) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(out) {
                    if *y > 0.0 {
                        *d += x;
                    }
                }
            }
            Op::Tanh(a) => {
                let out = node.value.values();
                for ((d, x), y) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(out) {
                    *d += x * (1.0 - y * y);
                }
            }
            Op::LogSigmoid(a) => {
                let inp = self.value(*a).values();
                for ((d, x), z) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(inp) {
                    *d += x * sigmoid(-z);
                }
            }
            Op::Softplus(a) => {
                let inp = self.value(*a).values();
                for ((d, x), z) in acc(grads, *a, g.len()).iter_mut().zip(g).zip(inp) {
                    *d += x * sigmoid(*z);
                }
            }
            Op::ConcatCols(a, b) => {
                let (n, ma) = self.value(*a).dims();
                let mb = self.value(*b).cols();
                let m = ma + mb;
                if self.ng(*a) {
                    let da = acc(grads, *a, n * ma);
                    for i in 0..n {
                        add_into(&mut da[i * ma..(i + 1) * ma], &g[i * m..i * m + ma]);
                    }
                }
                if self.ng(*b) {
                    let db = acc(grads, *b, n * mb);
                    for i in 0..n {
                        add_into(&mut db[i * mb..(i + 1) * mb], &g[i * m + ma..(i + 1) * m]);
                    }
                }
            }
            Op::GatherRows(a, indices) => {
                let (n, m) = self.value(*a).dims();
                let da = acc(grads, *a, n * m);
                for (r, &i) in indices.iter().enumerate() {
                    add_into(&mut da[i * m..(i + 1) * m], &g[r * m..(r + 1) * m]);
                }
            }
            Op::Column(a, j) => {
                let (n, m) = self.value(*a).dims();
                let da = acc(grads, *a, n * m);
                for i in 0..n {
                    da[i * m + j] += g[i];
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                for d in acc(grads, *a, n).iter_mut() {
                    *d += g[0];
                }
            }
            Op::Fused { input, local_grad } => {
                for (d, x) in acc(grads, *input, local_grad.len()).iter_mut().zip(local_grad) {
                    *d += g[0] * x;
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
