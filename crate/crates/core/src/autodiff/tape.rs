//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node holding its output value and the ids of
//! its inputs. Because inputs always exist before the node that consumes
//! them, the node vector is already in topological order and the backward
//! sweep is a single reverse pass.

use std::sync::Arc;

use super::tensor::{matmul_at_raw, matmul_bt_raw, matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Grouped edge list feeding a message-passing step.
///
/// Output row `s` aggregates over edges `offsets[s]..offsets[s + 1]`; each edge
/// names the input row it reads from. Output row `s` is owned by input row `s`,
/// so an index with `n_out` segments requires `n_in >= n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    offsets: Vec<usize>,
    sources: Vec<usize>,
    n_in: usize,
}

impl EdgeIndex {
    pub fn new(offsets: Vec<usize>, sources: Vec<usize>, n_in: usize) -> Result<Self> {
        if offsets.first() != Some(&0) || offsets.last() != Some(&sources.len()) {
            return Err(Error::Contract(
                "edge index offsets must start at 0 and end at the edge count".into(),
            ));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Contract(
                "edge index offsets must be non-decreasing".into(),
            ));
        }
        let n_out = offsets.len() - 1;
        if n_out > n_in {
            return Err(Error::Contract(format!(
                "{n_out} output rows but only {n_in} input rows"
            )));
        }
        if let Some(&bad) = sources.iter().find(|&&s| s >= n_in) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: n_in,
            });
        }
        for s in 0..n_out {
            if offsets[s] == offsets[s + 1] {
                return Err(Error::Contract(format!(
                    "output row {s} has an empty neighbourhood"
                )));
            }
        }
        Ok(EdgeIndex {
            offsets,
            sources,
            n_in,
        })
    }

    pub fn n_out(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn segment(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Arc<[usize]>,
        weights: Option<Arc<[f64]>>,
    },
    SquaredError(Var, Arc<Tensor>),
    KlStandardNormal(Var, Var),
    EdgeScores {
        wh: Var,
        att: Var,
        edges: Arc<EdgeIndex>,
    },
    SegmentSoftmax(Var, Arc<EdgeIndex>),
    Aggregate {
        alpha: Var,
        wh: Var,
        edges: Arc<EdgeIndex>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Inputs of each recorded node; used to check topological order.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::KlStandardNormal(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Clamp(a, _, _)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::GatherRows(a, _)
            | Op::SquaredError(a, _)
            | Op::SegmentSoftmax(a, _) => vec![*a],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Op::ConcatCols(vs) => vs.clone(),
            Op::EdgeScores { wh, att, .. } => vec![*wh, *att],
            Op::Aggregate { alpha, wh, .. } => vec![*alpha, *wh],
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::dim(
                "matmul",
                format!("[m×k]·[k×n], left {:?}", ta.shape()),
                format!("right {:?}", tb.shape()),
            ));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(ta.data(), tb.data(), m, k, n))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`n` bias to every row of an `[m×n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.rank() != 2 || tb.len() != tx.shape()[1] {
            return Err(Error::dim(
                "add_bias",
                format!("bias of length {}", tx.cols()),
                format!("bias shape {:?} for input {:?}", tb.shape(), tx.shape()),
            ));
        }
        let n = tx.shape()[1];
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(Error::dim(
                op_name,
                format!("{:?}", ta.shape()),
                format!("{:?}", tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    fn check_finite(&self, op: &str, x: Var) -> Result<()> {
        if self.value(x).is_finite() {
            Ok(())
        } else {
            Err(Error::NumericDomain(format!(
                "{op} received a non-finite input element"
            )))
        }
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check_finite("relu", x)?;
        Ok(self.unary(x, |v| v.max(0.0), Op::Relu(x)))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.check_finite("leaky_relu", x)?;
        Ok(self.unary(
            x,
            |v| if v > 0.0 { v } else { slope * v },
            Op::LeakyRelu(x, slope),
        ))
    }

    /// Row-wise softmax of a rank-2 tensor with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::dim(
                "softmax_rows",
                "rank-2 input",
                format!("shape {:?}", t.shape()),
            ));
        }
        self.check_finite("softmax_rows", x)?;
        let t = self.value(x);
        let cols = t.shape()[1];
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SoftmaxRows(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract(
                "concat_cols needs at least one input".into(),
            ));
        };
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::dim(
                    "concat_cols",
                    format!("{rows} rows"),
                    format!("shape {:?}", t.shape()),
                ));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, x: Var, rows: Arc<[usize]>) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::dim(
                "gather_rows",
                "rank-2 input",
                format!("{:?}", t.shape()),
            ));
        }
        let cols = t.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows.iter() {
            if r >= t.rows() {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::new(vec![rows.len(), cols], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::GatherRows(x, rows), rg))
    }

    /// Mean (optionally class-weighted) cross-entropy of row-wise softmax
    /// over `logits` against integer targets.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Arc<[usize]>,
        weights: Option<Arc<[f64]>>,
    ) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 || t.rows() != targets.len() {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("{} logit rows", targets.len()),
                format!("shape {:?}", t.shape()),
            ));
        }
        let classes = t.cols();
        if let Some(&bad) = targets.iter().find(|&&y| y >= classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: classes,
            });
        }
        if let Some(w) = &weights {
            if w.len() != classes {
                return Err(Error::dim(
                    "softmax_cross_entropy",
                    format!("{classes} class weights"),
                    w.len(),
                ));
            }
        }
        self.check_finite("softmax_cross_entropy", logits)?;
        let t = self.value(logits);
        let mut total = 0.0;
        let mut norm = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let w = weights.as_ref().map_or(1.0, |w| w[y]);
            total += w * -log_softmax_at(t.row(r), y);
            norm += w;
        }
        let loss = if norm > 0.0 { total / norm } else { 0.0 };
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                weights,
            },
            rg,
        ))
    }

    /// Squared error summed over columns, averaged over rows.
    pub fn squared_error(&mut self, pred: Var, target: Arc<Tensor>) -> Result<Var> {
        let t = self.value(pred);
        if !t.same_shape(&target) {
            return Err(Error::dim(
                "squared_error",
                format!("{:?}", target.shape()),
                format!("{:?}", t.shape()),
            ));
        }
        let sse: f64 = t
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, y)| (p - y) * (p - y))
            .sum();
        let loss = sse / t.rows() as f64;
        let rg = self.rg(&[pred]);
        Ok(self.push(Tensor::scalar(loss), Op::SquaredError(pred, target), rg))
    }

    /// KL divergence of `N(mu, diag exp(logvar))` from `N(0, I)`, summed over
    /// latent columns and averaged over rows.
    pub fn kl_standard_normal(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let (tm, tl) = (self.value(mu), self.value(logvar));
        if !tm.same_shape(tl) || tm.rank() != 2 {
            return Err(Error::dim(
                "kl_standard_normal",
                format!("{:?}", tm.shape()),
                format!("{:?}", tl.shape()),
            ));
        }
        let cols = tm.cols();
        let total: f64 = (0..tm.rows())
            .map(|r| {
                super::kl_standard_normal(
                    &tm.data()[r * cols..(r + 1) * cols],
                    &tl.data()[r * cols..(r + 1) * cols],
                )
            })
            .sum();
        let loss = total / tm.rows() as f64;
        let rg = self.rg(&[mu, logvar]);
        Ok(self.push(Tensor::scalar(loss), Op::KlStandardNormal(mu, logvar), rg))
    }

    /// Additive attention logits `a_dst·wh[owner] + a_src·wh[source]` per edge,
    /// where `att = [a_dst ‖ a_src]` has length `2K`.
    pub fn edge_scores(&mut self, wh: Var, att: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (tw, ta) = (self.value(wh), self.value(att));
        let k = tw.cols();
        if tw.rank() != 2 || tw.rows() != edges.n_in() || ta.len() != 2 * k {
            return Err(Error::dim(
                "edge_scores",
                format!(
                    "[{}×K] projections with a {}-long attention array",
                    edges.n_in(),
                    2 * k
                ),
                format!("{:?} and {:?}", tw.shape(), ta.shape()),
            ));
        }
        let (a_dst, a_src) = ta.data().split_at(k);
        let owner_score: Vec<f64> = (0..edges.n_out()).map(|s| dot(tw.row(s), a_dst)).collect();
        let src_score: Vec<f64> = (0..tw.rows()).map(|j| dot(tw.row(j), a_src)).collect();
        let mut out = Vec::with_capacity(edges.n_edges());
        for s in 0..edges.n_out() {
            for e in edges.segment(s) {
                out.push(owner_score[s] + src_score[edges.sources[e]]);
            }
        }
        let rg = self.rg(&[wh, att]);
        Ok(self.push(Tensor::vector(out), Op::EdgeScores { wh, att, edges }, rg))
    }

    /// Softmax over each output row's edge segment.
    pub fn segment_softmax(&mut self, scores: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let t = self.value(scores);
        if t.len() != edges.n_edges() {
            return Err(Error::dim(
                "segment_softmax",
                format!("{} edge scores", edges.n_edges()),
                t.len(),
            ));
        }
        self.check_finite("segment_softmax", scores)?;
        let mut data = self.value(scores).data().to_vec();
        for s in 0..edges.n_out() {
            softmax_in_place(&mut data[edges.segment(s)]);
        }
        let rg = self.rg(&[scores]);
        Ok(self.push(Tensor::vector(data), Op::SegmentSoftmax(scores, edges), rg))
    }

    /// `out[s] = Σ_e alpha[e] · wh[source(e)]` over the edges of segment `s`.
    pub fn aggregate(&mut self, alpha: Var, wh: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (ta, tw) = (self.value(alpha), self.value(wh));
        if ta.len() != edges.n_edges() || tw.rank() != 2 || tw.rows() != edges.n_in() {
            return Err(Error::dim(
                "aggregate",
                format!("{} weights over [{}×K]", edges.n_edges(), edges.n_in()),
                format!("{:?} over {:?}", ta.shape(), tw.shape()),
            ));
        }
        let k = tw.cols();
        let mut out = vec![0.0; edges.n_out() * k];
        for s in 0..edges.n_out() {
            let o = &mut out[s * k..(s + 1) * k];
            for e in edges.segment(s) {
                let a = ta.data()[e];
                for (ov, &hv) in o.iter_mut().zip(tw.row(edges.sources[e])) {
                    *ov += a * hv;
                }
            }
        }
        let out = Tensor::new(vec![edges.n_out(), k], out)?;
        let rg = self.rg(&[alpha, wh]);
        Ok(self.push(out, Op::Aggregate { alpha, wh, edges }, rg))
    }

    /// Propagates gradients from a scalar `loss` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.requires_grad(*a) {
                    let ga = matmul_bt_raw(gd, tb.data(), m, n, k);
                    self.accumulate(grads, *a, &ga);
                }
                if self.requires_grad(*b) {
                    let gb = matmul_at_raw(ta.data(), gd, m, k, n);
                    self.accumulate(grads, *b, &gb);
                }
            }
            Op::AddBias(x, b) => {
                if self.requires_grad(*x) {
                    self.accumulate(grads, *x, gd);
                }
                if self.requires_grad(*b) {
                    let n = self.value(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in gd.chunks(n) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, &gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate_if(grads, *a, || gd.to_vec());
                self.accumulate_if(grads, *b, || gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate_if(grads, *a, || gd.to_vec());
                self.accumulate_if(grads, *b, || gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate_if(grads, *a, || {
                    gd.iter().zip(tb.data()).map(|(g, y)| g * y).collect()
                });
                self.accumulate_if(grads, *b, || {
                    gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect()
                });
            }
            Op::Scale(x, s) => self.accumulate_if(grads, *x, || gd.iter().map(|g| g * s).collect()),
            Op::Exp(x) => self.accumulate_if(grads, *x, || {
                gd.iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y)
                    .collect()
            }),
            Op::Square(x) => {
                let tx = self.value(*x);
                self.accumulate_if(grads, *x, || {
                    gd.iter().zip(tx.data()).map(|(g, v)| 2.0 * v * g).collect()
                })
            }
            Op::Clamp(x, lo, hi) => {
                let tx = self.value(*x);
                self.accumulate_if(grads, *x, || {
                    gd.iter()
                        .zip(tx.data())
                        .map(|(g, &v)| if v >= *lo && v <= *hi { *g } else { 0.0 })
                        .collect()
                })
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                self.accumulate_if(grads, *x, || {
                    gd.iter()
                        .zip(tx.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect()
                })
            }
            Op::LeakyRelu(x, slope) => {
                let tx = self.value(*x);
                self.accumulate_if(grads, *x, || {
                    gd.iter()
                        .zip(tx.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { slope * g })
                        .collect()
                })
            }
            Op::SoftmaxRows(x) => {
                let cols = node.value.cols();
                self.accumulate_if(grads, *x, || {
                    let mut out = Vec::with_capacity(gd.len());
                    for (y, gr) in node.value.data().chunks(cols).zip(gd.chunks(cols)) {
                        softmax_backward(y, gr, &mut out);
                    }
                    out
                })
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate_if(grads, *x, || vec![gd[0]; n])
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate_if(grads, *x, || vec![gd[0] / n as f64; n])
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut col0 = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate_if(grads, p, || {
                        let mut out = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            out.extend_from_slice(&gd[r * total + col0..r * total + col0 + w]);
                        }
                        out
                    });
                    col0 += w;
                }
            }
            Op::GatherRows(x, rows) => {
                let tx = self.value(*x);
                let cols = tx.cols();
                self.accumulate_if(grads, *x, || {
                    let mut out = vec![0.0; tx.len()];
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            out[r * cols + c] += gd[i * cols + c];
                        }
                    }
                    out
                })
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                weights,
            } => {
                let tl = self.value(*logits);
                let classes = tl.cols();
                self.accumulate_if(grads, *logits, || {
                    let norm: f64 = match weights {
                        Some(w) => targets.iter().map(|&y| w[y]).sum(),
                        None => targets.len() as f64,
                    };
                    let mut out = vec![0.0; tl.len()];
                    if norm <= 0.0 {
                        return out;
                    }
                    for (r, &y) in targets.iter().enumerate() {
                        let w = weights.as_ref().map_or(1.0, |w| w[y]);
                        let row = &mut out[r * classes..(r + 1) * classes];
                        row.copy_from_slice(tl.row(r));
                        softmax_in_place(row);
                        row[y] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= gd[0] * w / norm;
                        }
                    }
                    out
                })
            }
            Op::SquaredError(pred, target) => {
                let tp = self.value(*pred);
                let scale = 2.0 * gd[0] / tp.rows() as f64;
                self.accumulate_if(grads, *pred, || {
                    tp.data()
                        .iter()
                        .zip(target.data())
                        .map(|(p, y)| scale * (p - y))
                        .collect()
                })
            }
            Op::KlStandardNormal(mu, logvar) => {
                let (tm, tl) = (self.value(*mu), self.value(*logvar));
                let scale = gd[0] / tm.rows() as f64;
                self.accumulate_if(grads, *mu, || tm.data().iter().map(|m| scale * m).collect());
                self.accumulate_if(grads, *logvar, || {
                    tl.data()
                        .iter()
                        .map(|l| scale * 0.5 * (l.exp() - 1.0))
                        .collect()
                });
            }
            Op::EdgeScores { wh, att, edges } => {
                let (tw, ta) = (self.value(*wh), self.value(*att));
                let k = tw.cols();
                let (a_dst, a_src) = ta.data().split_at(k);
                if self.requires_grad(*wh) {
                    let mut gw = vec![0.0; tw.len()];
                    for s in 0..edges.n_out() {
                        for e in edges.segment(s) {
                            let j = edges.sources[e];
                            for c in 0..k {
                                gw[s * k + c] += gd[e] * a_dst[c];
                                gw[j * k + c] += gd[e] * a_src[c];
                            }
                        }
                    }
                    self.accumulate(grads, *wh, &gw);
                }
                if self.requires_grad(*att) {
                    let mut ga = vec![0.0; 2 * k];
                    for s in 0..edges.n_out() {
                        for e in edges.segment(s) {
                            let j = edges.sources[e];
                            for c in 0..k {
                                ga[c] += gd[e] * tw.get2(s, c);
                                ga[k + c] += gd[e] * tw.get2(j, c);
                            }
                        }
                    }
                    self.accumulate(grads, *att, &ga);
                }
            }
            Op::SegmentSoftmax(scores, edges) => self.accumulate_if(grads, *scores, || {
                let mut out = Vec::with_capacity(gd.len());
                for s in 0..edges.n_out() {
                    let r = edges.segment(s);
                    softmax_backward(&node.value.data()[r.clone()], &gd[r], &mut out);
                }
                out
            }),
            Op::Aggregate { alpha, wh, edges } => {
                let (ta, tw) = (self.value(*alpha), self.value(*wh));
                let k = tw.cols();
                if self.requires_grad(*alpha) {
                    let mut ga = vec![0.0; ta.len()];
                    for s in 0..edges.n_out() {
                        for e in edges.segment(s) {
                            ga[e] = dot(&gd[s * k..(s + 1) * k], tw.row(edges.sources[e]));
                        }
                    }
                    self.accumulate(grads, *alpha, &ga);
                }
                if self.requires_grad(*wh) {
                    let mut gw = vec![0.0; tw.len()];
                    for s in 0..edges.n_out() {
                        for e in edges.segment(s) {
                            let j = edges.sources[e];
                            let a = ta.data()[e];
                            for c in 0..k {
                                gw[j * k + c] += a * gd[s * k + c];
                            }
                        }
                    }
                    self.accumulate(grads, *wh, &gw);
                }
            }
        }
    }

    fn accumulate_if(&self, grads: &mut [Option<Tensor>], v: Var, g: impl FnOnce() -> Vec<f64>) {
        if self.requires_grad(v) {
            self.accumulate(grads, v, &g());
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: &[f64]) {
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, &x) in existing.data_mut().iter_mut().zip(g) {
                    *e += x;
                }
            }
            slot @ None => {
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, g.to_vec()).expect("gradient matches value shape"));
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn log_softmax_at(row: &[f64], y: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[y] - lse
}

fn softmax_backward(y: &[f64], g: &[f64], out: &mut Vec<f64>) {
    let inner = dot(y, g);
    out.extend(y.iter().zip(g).map(|(yi, gi)| yi * (gi - inner)));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.5]), true);
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_at_three() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0), true);
        let y = tape.square(x);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x*x + x) -> 2x + 1
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.5, -1.0]), true);
        let xx = tape.mul(x, x).unwrap();
        let s = tape.add(xx, x).unwrap();
        let loss = tape.sum(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -1.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_contract_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = tape.square(x);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let c = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let p = tape.mul(x, c).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn tape_is_topologically_ordered() {
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            true,
        );
        let w = tape.leaf(Tensor::identity(2), true);
        let h = tape.matmul(x, w).unwrap();
        let r = tape.relu(h).unwrap();
        let s = tape.softmax_rows(r).unwrap();
        let _ = tape.mean(s);
        for i in 0..tape.len() {
            for input in tape.inputs_of(Var(i)) {
                assert!(input.index() < i);
            }
        }
    }

    #[test]
    fn relu_rejects_non_finite() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, f64::NAN]), false);
        assert!(matches!(tape.relu(x), Err(Error::NumericDomain(_))));
        let y = tape.leaf(
            Tensor::matrix(1, 2, vec![f64::INFINITY, 0.0]).unwrap(),
            false,
        );
        assert!(matches!(tape.softmax_rows(y), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn softmax_requires_rank_two() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), false);
        assert!(matches!(tape.softmax_rows(x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn edge_index_rejects_empty_segment() {
        assert!(EdgeIndex::new(vec![0, 1, 1], vec![0], 2).is_err());
        assert!(EdgeIndex::new(vec![0, 1, 2], vec![0, 1], 2).is_ok());
        assert!(matches!(
            EdgeIndex::new(vec![0, 1], vec![5], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
