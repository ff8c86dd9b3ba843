//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameter
//! leaves borrow their values from a [`ParamStore`]; [`Tape::backward`]
//! walks the record in reverse and returns per-parameter gradients.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};

use super::loss::softmax;
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);
static NO_PARAMS: LazyLock<ParamStore> = LazyLock::new(ParamStore::new);

/// Row index meaning "emit zeros" in [`Tape::gather_rows`].
pub const PAD_ROW: u32 = u32::MAX;

const LN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    pub(crate) id: u32,
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

impl Value<'_> {
    fn tensor(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: u32, w: u32, b: Option<u32> },
    Bmm { a: u32, b: u32, trans_b: bool },
    Add(u32, u32),
    Mul(u32, u32),
    Scale(u32, f64),
    MulConst(u32, Arc<Vec<f64>>),
    GatherRows { x: u32, rows: Arc<[u32]>, row_len: usize },
    LayerNorm { x: u32, gamma: u32, beta: u32, stats: Vec<(f64, f64)> },
    Gelu(u32),
    WindowSoftmax { scores: u32, bias: Option<u32>, windows: usize, heads: usize, n: usize },
    MeanRows(u32),
    Reshape(u32),
    Sum(u32),
    CrossEntropy { logits: u32, label: usize },
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p> {
    id: u64,
    params: &'p ParamStore,
    param_nodes: Vec<Option<u32>>,
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    /// A tape with no parameters, for differentiating w.r.t. inputs only.
    pub fn standalone() -> Tape<'static> {
        Tape::new(&NO_PARAMS)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        self.nodes[v.id as usize].value.tensor()
    }

    fn val(&self, id: u32) -> &Tensor {
        self.nodes[id as usize].value.tensor()
    }

    fn check(&self, v: Var) -> Result<u32> {
        if v.tape != self.id || v.id as usize >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        Ok(v.id)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[u32]) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p as usize].requires_grad);
        self.push_node(Value::Owned(value), op, requires_grad)
    }

    fn push_node(&mut self, value: Value<'p>, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self.id, id }
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push_node(Value::Owned(t), Op::Leaf, false)
    }

    /// Input leaf whose gradient is reported by [`Gradients::input`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_node(Value::Owned(t), Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(node) = self.param_nodes[id.0] {
            return Var { tape: self.id, id: node };
        }
        let params = self.params;
        let v = self.push_node(Value::Borrowed(&params.get(id).value), Op::Param(id), true);
        self.param_nodes[id.0] = Some(v.id);
        v
    }

    /// `x[.., k] · w[k, m] + b[m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xi, wi) = (self.check(x)?, self.check(w)?);
        let bi = b.map(|b| self.check(b)).transpose()?;
        let (xt, wt) = (self.val(xi), self.val(wi));
        if wt.shape().len() != 2 || xt.last_dim() != wt.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "linear: input {:?} vs weight {:?}",
                xt.shape(),
                wt.shape()
            )));
        }
        let (k, m) = (wt.shape()[0], wt.shape()[1]);
        let n = xt.len() / k;
        let mut out = vec![0.0; n * m];
        if let Some(bi) = bi {
            let bt = self.val(bi);
            if bt.len() != m {
                return Err(Error::ShapeMismatch(format!("linear: bias {:?} for width {m}", bt.shape())));
            }
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(bt.data());
            }
        }
        gemm(n, k, m, MatRef::row_major(xt.data(), k), MatRef::row_major(wt.data(), m), 1.0, &mut out);
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let mut parents = vec![xi, wi];
        parents.extend(bi);
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x: xi, w: wi, b: bi }, &parents))
    }

    /// Batched matmul: `a[B, m, k] · b[B, k, n]`, or `a · bᵀ` with
    /// `b[B, n, k]` when `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        let (bs, m, k) = dims3(at)?;
        let (bs2, r, c) = dims3(bt)?;
        let n = if trans_b { r } else { c };
        let kb = if trans_b { c } else { r };
        if bs != bs2 || k != kb {
            return Err(Error::ShapeMismatch(format!(
                "bmm: {:?} x {:?} (trans_b={trans_b})",
                at.shape(),
                bt.shape()
            )));
        }
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            let a_i = MatRef::row_major(&at.data()[i * m * k..(i + 1) * m * k], k);
            let b_slice = &bt.data()[i * k * n..(i + 1) * k * n];
            let b_i = if trans_b {
                MatRef::row_major(b_slice, k).transposed()
            } else {
                MatRef::row_major(b_slice, n)
            };
            gemm(m, k, n, a_i, b_i, 0.0, &mut out[i * m * n..(i + 1) * m * n]);
        }
        Ok(self.push(Tensor::new(vec![bs, m, n], out)?, Op::Bmm { a: ai, b: bi, trans_b }, &[ai, bi]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        same_len("add", at, bt)?;
        let out: Vec<f64> = at.data().iter().zip(bt.data()).map(|(x, y)| x + y).collect();
        Ok(self.push(Tensor::new(at.shape().to_vec(), out)?, Op::Add(ai, bi), &[ai, bi]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        same_len("mul", at, bt)?;
        let out: Vec<f64> = at.data().iter().zip(bt.data()).map(|(x, y)| x * y).collect();
        Ok(self.push(Tensor::new(at.shape().to_vec(), out)?, Op::Mul(ai, bi), &[ai, bi]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        let out: Vec<f64> = xt.data().iter().map(|v| v * c).collect();
        Ok(self.push(Tensor::new(xt.shape().to_vec(), out)?, Op::Scale(xi, c), &[xi]))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, mask: Arc<Vec<f64>>) -> Result<Var> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        if mask.len() != xt.len() {
            return Err(Error::ShapeMismatch(format!("mul_const: mask {} vs {}", mask.len(), xt.len())));
        }
        let out: Vec<f64> = xt.data().iter().zip(mask.iter()).map(|(v, m)| v * m).collect();
        Ok(self.push(Tensor::new(xt.shape().to_vec(), out)?, Op::MulConst(xi, mask), &[xi]))
    }

    /// Views `x` as rows of `row_len` values and emits `rows[r]` for every
    /// output row; [`PAD_ROW`] produces zeros.
    pub fn gather_rows(&mut self, x: Var, rows: Arc<[u32]>, row_len: usize, shape: Vec<usize>) -> Result<Var> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        let n_src = xt.len() / row_len.max(1);
        if row_len == 0 || xt.len() % row_len != 0 || shape.iter().product::<usize>() != rows.len() * row_len {
            return Err(Error::ShapeMismatch(format!(
                "gather_rows: source {:?}, row_len {row_len}, {} rows into {shape:?}",
                xt.shape(),
                rows.len()
            )));
        }
        let mut out = vec![0.0; rows.len() * row_len];
        let src = xt.data();
        for (dst, &r) in out.chunks_exact_mut(row_len).zip(rows.iter()) {
            if r != PAD_ROW {
                let r = r as usize;
                if r >= n_src {
                    return Err(Error::ShapeMismatch(format!("gather_rows: row {r} out of {n_src}")));
                }
                dst.copy_from_slice(&src[r * row_len..(r + 1) * row_len]);
            }
        }
        Ok(self.push(Tensor::new(shape, out)?, Op::GatherRows { x: xi, rows, row_len }, &[xi]))
    }

    /// Layer normalization over the trailing dimension.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xi, gi, bi) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        let (xt, gt, bt) = (self.val(xi), self.val(gi), self.val(bi));
        let c = xt.last_dim();
        if gt.len() != c || bt.len() != c {
            return Err(Error::ShapeMismatch(format!("layer_norm: width {c}, gamma {:?}", gt.shape())));
        }
        let mut out = vec![0.0; xt.len()];
        let mut stats = Vec::with_capacity(xt.len() / c);
        for (row, dst) in xt.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rstd = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..c {
                dst[j] = (row[j] - mean) * rstd * gt.data()[j] + bt.data()[j];
            }
            stats.push((mean, rstd));
        }
        Ok(self.push(
            Tensor::new(xt.shape().to_vec(), out)?,
            Op::LayerNorm { x: xi, gamma: gi, beta: bi, stats },
            &[xi, gi, bi],
        ))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        let out: Vec<f64> = xt.data().iter().map(|&v| gelu(v)).collect();
        Ok(self.push(Tensor::new(xt.shape().to_vec(), out)?, Op::Gelu(xi), &[xi]))
    }

    /// Row softmax of window attention scores `[windows·heads, n, n]` after
    /// adding a per-head bias `[heads, n, n]` and an optional constant
    /// additive mask `[windows, n, n]` shared by all heads.
    pub fn window_softmax(
        &mut self,
        scores: Var,
        bias: Option<Var>,
        mask: Option<&[f64]>,
        windows: usize,
        heads: usize,
    ) -> Result<Var> {
        let si = self.check(scores)?;
        let bi = bias.map(|b| self.check(b)).transpose()?;
        let st = self.val(si);
        let (bh, n, n2) = dims3(st)?;
        if n != n2 || bh != windows * heads {
            return Err(Error::ShapeMismatch(format!(
                "window_softmax: scores {:?} for {windows} windows x {heads} heads",
                st.shape()
            )));
        }
        let bias_t = bi.map(|b| self.val(b));
        if let Some(b) = bias_t {
            if b.len() != heads * n * n {
                return Err(Error::ShapeMismatch(format!("window_softmax: bias {:?}", b.shape())));
            }
        }
        if let Some(m) = mask {
            if m.len() != windows * n * n {
                return Err(Error::ShapeMismatch(format!("window_softmax: mask of {} values", m.len())));
            }
        }
        let nn = n * n;
        let mut out = st.data().to_vec();
        for w in 0..windows {
            for h in 0..heads {
                let block = &mut out[(w * heads + h) * nn..(w * heads + h + 1) * nn];
                if let Some(b) = bias_t {
                    for (v, bv) in block.iter_mut().zip(&b.data()[h * nn..(h + 1) * nn]) {
                        *v += bv;
                    }
                }
                if let Some(m) = mask {
                    for (v, mv) in block.iter_mut().zip(&m[w * nn..(w + 1) * nn]) {
                        *v += mv;
                    }
                }
                for row in block.chunks_exact_mut(n) {
                    softmax_in_place(row);
                }
            }
        }
        let mut parents = vec![si];
        parents.extend(bi);
        Ok(self.push(
            Tensor::new(st.shape().to_vec(), out)?,
            Op::WindowSoftmax { scores: si, bias: bi, windows, heads, n },
            &parents,
        ))
    }

    /// Mean over rows: `[n, c] -> [c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let xt = self.val(xi);
        let c = xt.last_dim();
        let n = xt.len() / c;
        let mut out = vec![0.0; c];
        for row in xt.data().chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        Ok(self.push(Tensor::new(vec![c], out)?, Op::MeanRows(xi), &[xi]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let xi = self.check(x)?;
        let t = self.val(xi).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(xi), &[xi]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let s = self.val(xi).data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(xi), &[xi]))
    }

    /// `-log softmax(logits)[label]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let li = self.check(logits)?;
        let (loss, _) = super::loss::cross_entropy(self.val(li).data(), label)?;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits: li, label }, &[li]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::NoForward);
        }
        let li = self.check(loss)? as usize;
        if self.nodes[li].value.tensor().len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar, got {:?}",
                self.nodes[li].value.tensor().shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; li + 1];
        grads[li] = Some(vec![1.0]);
        let mut out = Gradients {
            params: vec![None; self.params.len()],
            leaves: Vec::new(),
        };
        for i in (0..=li).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, node, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, node: &Node, g: Vec<f64>, grads: &mut [Option<Vec<f64>>], out: &mut Gradients) {
        let value = node.value.tensor();
        match &node.op {
            Op::Leaf => out.leaves.push((i as u32, Tensor::new(value.shape().to_vec(), g).unwrap())),
            Op::Param(id) => match &mut out.params[id.0] {
                Some(acc) => {
                    for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                slot => *slot = Some(Tensor::new(value.shape().to_vec(), g).unwrap()),
            },
            Op::Linear { x, w, b } => {
                let (xt, wt) = (self.val(*x), self.val(*w));
                let (k, m) = (wt.shape()[0], wt.shape()[1]);
                let n = xt.len() / k;
                if let Some(dx) = self.buf(grads, *x) {
                    gemm(n, m, k, MatRef::row_major(&g, m), MatRef::row_major(wt.data(), m).transposed(), 1.0, dx);
                }
                if let Some(dw) = self.buf(grads, *w) {
                    gemm(k, n, m, MatRef::row_major(xt.data(), k).transposed(), MatRef::row_major(&g, m), 1.0, dw);
                }
                if let Some(b) = b {
                    if let Some(db) = self.buf(grads, *b) {
                        for row in g.chunks_exact(m) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (at, bt) = (self.val(*a), self.val(*b));
                let (bs, m, k) = dims3(at).unwrap();
                let n = value.shape()[2];
                if let Some(da) = self.buf(grads, *a) {
                    for s in 0..bs {
                        let b_slice = &bt.data()[s * k * n..(s + 1) * k * n];
                        // d(a) = g · Bᵀ where B is the k×n right operand.
                        let bt_view = if *trans_b {
                            MatRef::row_major(b_slice, k)
                        } else {
                            MatRef::row_major(b_slice, n).transposed()
                        };
                        gemm(
                            m,
                            n,
                            k,
                            MatRef::row_major(&g[s * m * n..(s + 1) * m * n], n),
                            bt_view,
                            1.0,
                            &mut da[s * m * k..(s + 1) * m * k],
                        );
                    }
                }
                if let Some(db) = self.buf(grads, *b) {
                    for s in 0..bs {
                        let a_s = MatRef::row_major(&at.data()[s * m * k..(s + 1) * m * k], k);
                        let g_s = MatRef::row_major(&g[s * m * n..(s + 1) * m * n], n);
                        let dst = &mut db[s * k * n..(s + 1) * k * n];
                        if *trans_b {
                            gemm(n, m, k, g_s.transposed(), a_s, 1.0, dst);
                        } else {
                            gemm(k, m, n, a_s.transposed(), g_s, 1.0, dst);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if let Some(d) = self.buf(grads, p) {
                        add_into(d, &g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                if let Some(d) = self.buf(grads, *a) {
                    for ((d, gv), o) in d.iter_mut().zip(&g).zip(bv) {
                        *d += gv * o;
                    }
                }
                if let Some(d) = self.buf(grads, *b) {
                    for ((d, gv), o) in d.iter_mut().zip(&g).zip(av) {
                        *d += gv * o;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(d) = self.buf(grads, *x) {
                    for (d, gv) in d.iter_mut().zip(&g) {
                        *d += c * gv;
                    }
                }
            }
            Op::MulConst(x, mask) => {
                if let Some(d) = self.buf(grads, *x) {
                    for ((d, gv), m) in d.iter_mut().zip(&g).zip(mask.iter()) {
                        *d += gv * m;
                    }
                }
            }
            Op::GatherRows { x, rows, row_len } => {
                if let Some(d) = self.buf(grads, *x) {
                    for (src, &r) in g.chunks_exact(*row_len).zip(rows.iter()) {
                        if r != PAD_ROW {
                            let r = r as usize;
                            add_into(&mut d[r * row_len..(r + 1) * row_len], src);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, stats } => {
                let xt = self.val(*x);
                let gam = self.val(*gamma).data();
                let c = xt.last_dim();
                let mut xhat = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                let want_dx = self.nodes[*x as usize].requires_grad;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx_all = if want_dx { vec![0.0; xt.len()] } else { Vec::new() };
                for (r, (row, grow)) in xt.data().chunks_exact(c).zip(g.chunks_exact(c)).enumerate() {
                    let (mean, rstd) = stats[r];
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for j in 0..c {
                        xhat[j] = (row[j] - mean) * rstd;
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                        dxhat[j] = grow[j] * gam[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[j];
                    }
                    if want_dx {
                        m1 /= c as f64;
                        m2 /= c as f64;
                        let dst = &mut dx_all[r * c..(r + 1) * c];
                        for j in 0..c {
                            dst[j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                }
                if let Some(d) = self.buf(grads, *x) {
                    add_into(d, &dx_all);
                }
                if let Some(d) = self.buf(grads, *gamma) {
                    add_into(d, &dgamma);
                }
                if let Some(d) = self.buf(grads, *beta) {
                    add_into(d, &dbeta);
                }
            }
            Op::Gelu(x) => {
                let xv = self.val(*x).data();
                if let Some(d) = self.buf(grads, *x) {
                    for ((d, gv), &v) in d.iter_mut().zip(&g).zip(xv) {
                        *d += gv * gelu_grad(v);
                    }
                }
            }
            Op::WindowSoftmax { scores, bias, windows, heads, n } => {
                let (n, nn) = (*n, n * n);
                let probs = value.data();
                let mut ds = vec![0.0; probs.len()];
                for ((dsr, pr), gr) in ds.chunks_exact_mut(n).zip(probs.chunks_exact(n)).zip(g.chunks_exact(n)) {
                    let dot: f64 = pr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for j in 0..n {
                        dsr[j] = pr[j] * (gr[j] - dot);
                    }
                }
                if let Some(b) = bias {
                    if let Some(db) = self.buf(grads, *b) {
                        for w in 0..*windows {
                            for h in 0..*heads {
                                let src = &ds[(w * heads + h) * nn..(w * heads + h + 1) * nn];
                                add_into(&mut db[h * nn..(h + 1) * nn], src);
                            }
                        }
                    }
                }
                if let Some(d) = self.buf(grads, *scores) {
                    add_into(d, &ds);
                }
            }
            Op::MeanRows(x) => {
                let c = value.len();
                let n = self.val(*x).len() / c;
                if let Some(d) = self.buf(grads, *x) {
                    for row in d.chunks_exact_mut(c) {
                        for (dv, gv) in row.iter_mut().zip(&g) {
                            *dv += gv / n as f64;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = self.buf(grads, *x) {
                    add_into(d, &g);
                }
            }
            Op::Sum(x) => {
                if let Some(d) = self.buf(grads, *x) {
                    for dv in d.iter_mut() {
                        *dv += g[0];
                    }
                }
            }
            Op::CrossEntropy { logits, label } => {
                let mut p = softmax(self.val(*logits).data());
                p[*label] -= 1.0;
                if let Some(d) = self.buf(grads, *logits) {
                    for (dv, pv) in d.iter_mut().zip(&p) {
                        *dv += g[0] * pv;
                    }
                }
            }
        }
    }

    fn buf<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: u32) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[id as usize];
        if !node.requires_grad {
            return None;
        }
        Some(grads[id as usize].get_or_insert_with(|| vec![0.0; node.value.tensor().len()]))
    }
}

fn dims3(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[a, b, c] => Ok((a, b, c)),
        s => Err(Error::ShapeMismatch(format!("expected rank-3 tensor, got {s:?}"))),
    }
}

fn same_len(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
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

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * pdf
}
