use std::sync::Arc;

use super::kernels::gemm;
use super::{lit, ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Gather index meaning "emit zero" (used for padding).
pub const GATHER_ZERO: usize = usize::MAX;

const LN_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        inp: usize,
        out: usize,
    },
    Bmm {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddSuffix(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gather(Var, Arc<[usize]>),
    Concat(Vec<Var>),
    Reshape(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Dynamic reverse-mode tape.
///
/// Every operation appends a node holding its output value. `backward` walks
/// the nodes in reverse and accumulates gradients into every node that
/// requires one. Leaf gradients are kept (and keep accumulating across calls);
/// intermediate gradients are released after they are propagated.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    bound: Vec<Var>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn grad_buf<'a, T: Real>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            bound: Vec::new(),
        }
    }

    /// A tape with every parameter of `store` recorded as a leaf.
    pub fn bind(store: &ParamStore<T>, requires_grad: bool) -> Self {
        let mut tape = Self::new();
        for id in store.ids() {
            let v = tape.leaf(store.value(id).clone(), requires_grad);
            tape.bound.push(v);
        }
        tape
    }

    /// The leaf bound to a parameter.
    pub fn p(&self, id: ParamId) -> Var {
        self.bound[id.0]
    }

    /// Add the gradients of all bound parameters into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for id in store.ids().collect::<Vec<_>>() {
            let v = self.bound[id.0];
            if let Some(g) = &self.grads[v.0] {
                for (dst, src) in store.grad_mut(id).data_mut().iter_mut().zip(g) {
                    *dst += *src;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf (or of any node before it is released).
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].as_ref().map(|g| {
            Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape")
        })
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            false,
            false,
            m,
            n,
            k,
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, m, k, n },
            rg,
        ))
    }

    /// Affine map over the last axis: `x · w + b` with `w: [in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 || sx.last().copied() != Some(sw[0]) {
            return Err(Error::dim("linear", &sx, &sw));
        }
        let (inp, out) = (sw[0], sw[1]);
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(Error::dim("linear bias", self.shape(b), &[out]));
            }
        }
        let rows = self.value(x).len() / inp.max(1);
        let mut y = vec![T::zero(); rows * out];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in y.chunks_mut(out) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            false,
            false,
            rows,
            out,
            inp,
            self.value(x).data(),
            self.value(w).data(),
            &mut y,
        );
        let mut shape = sx;
        *shape.last_mut().expect("rank >= 1") = out;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::Linear {
                x,
                w,
                b,
                rows,
                inp,
                out,
            },
            rg,
        ))
    }

    /// Batched product: `[B,m,k] × [B,k,n]`, or `[B,m,k] × [B,n,k]ᵀ` with `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::dim("bmm", &sa, &sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (bk, n) = if trans_b {
            (sb[2], sb[1])
        } else {
            (sb[1], sb[2])
        };
        if bk != k {
            return Err(Error::dim("bmm", &sa, &sb));
        }
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                gemm(
                    false,
                    trans_b,
                    m,
                    n,
                    k,
                    &av[i * m * k..(i + 1) * m * k],
                    &bv[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![batch, m, n], out)?,
            Op::Bmm {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            },
            rg,
        ))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `a + b` where `b`'s shape is a trailing suffix of `a`'s shape.
    pub fn add_suffix(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::dim("add_suffix", sa, sb));
        }
        let bv = self.value(b).data();
        let period = bv.len().max(1);
        let data = self
            .value(a)
            .data()
            .chunks(period)
            .flat_map(|chunk| chunk.iter().zip(bv).map(|(&x, &y)| x + y))
            .collect();
        let value = Tensor::new(sa.to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::AddSuffix(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum::<T>() / lit::<T>(v.len().max(1) as f64);
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Row-wise softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let w = v.last_dim();
        if w == 0 {
            return Err(Error::dim("softmax", v.shape(), &[1]));
        }
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(w) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x = *x / s;
            }
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    /// Normalize each last-axis row to zero mean and unit variance, then
    /// apply `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let v = self.value(x);
        let c = v.last_dim();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim("layer_norm", v.shape(), self.shape(gamma)));
        }
        let rows = v.len() / c.max(1);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![T::zero(); v.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); v.len()];
        let cf = lit::<T>(c as f64);
        for r in 0..rows {
            let row = &v.data()[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / cf;
            let rs = T::one() / (var + lit(LN_EPS)).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu_fwd);
        let rg = self.rg(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid_fwd);
        let rg = self.rg(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        let rg = self.rg(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    /// `out[i] = a[index[i]]`, or zero where `index[i] == GATHER_ZERO`.
    ///
    /// Covers permutations, slicing, padding and broadcasting reads.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::dim("gather", &shape, &[index.len()]));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(n);
        for &i in index.iter() {
            if i == GATHER_ZERO {
                out.push(T::zero());
            } else if i < src.len() {
                out.push(src[i]);
            } else {
                return Err(Error::Contract(format!(
                    "gather index {i} out of range for {} elements",
                    src.len()
                )));
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Gather(a, index), rg))
    }

    /// Concatenate along the last axis; leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let lead = &self.shape(*first)[..self.shape(*first).len() - 1];
        let mut width = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(Error::dim("concat", self.shape(*first), s));
            }
            width += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                let w = v.last_dim();
                out.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Columns `[start, start+len)` of the last axis.
    pub fn slice_lastdim(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let w = *s.last().unwrap_or(&1);
        if start + len > w {
            return Err(Error::dim("slice_lastdim", &s, &[start, len]));
        }
        let rows = self.value(a).len() / w.max(1);
        let index: Vec<usize> = (0..rows)
            .flat_map(|r| (start..start + len).map(move |j| r * w + j))
            .collect();
        let mut shape = s;
        *shape.last_mut().expect("rank >= 1") = len;
        self.gather(a, index.into(), shape)
    }

    /// Propagate gradients from a scalar `loss` into every node that needs one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Contract(
                "loss does not depend on any tensor that requires grad".into(),
            ));
        }
        match &mut self.grads[loss.0] {
            Some(g) => g[0] += T::one(),
            slot => *slot = Some(vec![T::one()]),
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let val = |v: Var| nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if let Some(da) = grad_buf(nodes, grads, *a) {
                    gemm(false, true, m, k, n, g, val(*b), da);
                }
                if let Some(db) = grad_buf(nodes, grads, *b) {
                    gemm(true, false, k, n, m, val(*a), g, db);
                }
            }
            Op::Linear {
                x,
                w,
                b,
                rows,
                inp,
                out,
            } => {
                let (rows, inp, out) = (*rows, *inp, *out);
                if let Some(dx) = grad_buf(nodes, grads, *x) {
                    gemm(false, true, rows, inp, out, g, val(*w), dx);
                }
                if let Some(dw) = grad_buf(nodes, grads, *w) {
                    gemm(true, false, inp, out, rows, val(*x), g, dw);
                }
                if let Some(b) = b {
                    if let Some(db) = grad_buf(nodes, grads, *b) {
                        for row in g.chunks(out) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Bmm {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            } => {
                let (batch, m, k, n) = (*batch, *m, *k, *n);
                let (sa, sb, sc) = (m * k, k * n, m * n);
                if let Some(da) = grad_buf(nodes, grads, *a) {
                    let bv = val(*b);
                    for t in 0..batch {
                        let gc = &g[t * sc..(t + 1) * sc];
                        let bt = &bv[t * sb..(t + 1) * sb];
                        let dat = &mut da[t * sa..(t + 1) * sa];
                        // C = A·B: dA = dC·Bᵀ ; C = A·Bᵀ: dA = dC·B
                        gemm(false, !*trans_b, m, k, n, gc, bt, dat);
                    }
                }
                if let Some(db) = grad_buf(nodes, grads, *b) {
                    let av = val(*a);
                    for t in 0..batch {
                        let gc = &g[t * sc..(t + 1) * sc];
                        let at = &av[t * sa..(t + 1) * sa];
                        let dbt = &mut db[t * sb..(t + 1) * sb];
                        if *trans_b {
                            // dB = dCᵀ·A
                            gemm(true, false, n, k, m, gc, at, dbt);
                        } else {
                            // dB = Aᵀ·dC
                            gemm(true, false, k, n, m, at, gc, dbt);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = grad_buf(nodes, grads, v) {
                        add_into(d, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = grad_buf(nodes, grads, *b) {
                    for (x, &y) in d.iter_mut().zip(g) {
                        *x -= y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(bv) {
                        *x += gy * y;
                    }
                }
                if let Some(d) = grad_buf(nodes, grads, *b) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(av) {
                        *x += gy * y;
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(bv) {
                        *x += gy / y;
                    }
                }
                if let Some(d) = grad_buf(nodes, grads, *b) {
                    for (((x, &gy), &num), &den) in d.iter_mut().zip(g).zip(av).zip(bv) {
                        *x -= gy * num / (den * den);
                    }
                }
            }
            Op::AddSuffix(a, b) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = grad_buf(nodes, grads, *b) {
                    let period = d.len().max(1);
                    for chunk in g.chunks(period) {
                        add_into(d, chunk);
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for (x, &gy) in d.iter_mut().zip(g) {
                        *x += gy * *s;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    d.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    let s = g[0] / lit::<T>(d.len().max(1) as f64);
                    d.iter_mut().for_each(|x| *x += s);
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let w = node.value.last_dim();
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((drow, grow), yrow) in d.chunks_mut(w).zip(g.chunks(w)).zip(y.chunks(w)) {
                        let dotp: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for ((x, &gy), &yy) in drow.iter_mut().zip(grow).zip(yrow) {
                            *x += yy * (gy - dotp);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = node.value.last_dim();
                let gv = val(*gamma);
                if let Some(dg) = grad_buf(nodes, grads, *gamma) {
                    for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ((d, &gy), &h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *d += gy * h;
                        }
                    }
                }
                if let Some(db) = grad_buf(nodes, grads, *beta) {
                    for grow in g.chunks(c) {
                        add_into(db, grow);
                    }
                }
                if let Some(dx) = grad_buf(nodes, grads, *x) {
                    let cf = lit::<T>(c as f64);
                    let mut dh = vec![T::zero(); c];
                    for (r, (drow, (grow, hrow))) in dx
                        .chunks_mut(c)
                        .zip(g.chunks(c).zip(xhat.chunks(c)))
                        .enumerate()
                    {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            dh[j] = grow[j] * gv[j];
                            m1 += dh[j];
                            m2 += dh[j] * hrow[j];
                        }
                        m1 = m1 / cf;
                        m2 = m2 / cf;
                        for j in 0..c {
                            drow[j] += rstd[r] * (dh[j] - m1 - hrow[j] * m2);
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let xv = val(*a);
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((x, &gy), &xx) in d.iter_mut().zip(g).zip(xv) {
                        *x += gy * gelu_grad(xx);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((x, &gy), &s) in d.iter_mut().zip(g).zip(y) {
                        *x += gy * s * (T::one() - s);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for ((x, &gy), &t) in d.iter_mut().zip(g).zip(y) {
                        *x += gy * (T::one() - t * t);
                    }
                }
            }
            Op::Gather(a, index) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    for (&src, &gy) in index.iter().zip(g) {
                        if src != GATHER_ZERO {
                            d[src] += gy;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let width = node.value.last_dim();
                let rows = node.value.len() / width.max(1);
                let mut offset = 0;
                for p in parts {
                    let w = nodes[p.0].value.last_dim();
                    if let Some(d) = grad_buf(nodes, grads, *p) {
                        for r in 0..rows {
                            add_into(
                                &mut d[r * w..(r + 1) * w],
                                &g[r * width + offset..r * width + offset + w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = grad_buf(nodes, grads, *a) {
                    add_into(d, g);
                }
            }
        }
    }
}

#[inline]
fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid_fwd<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn gelu_fwd<T: Real>(x: T) -> T {
    x * normal_cdf(x)
}

fn normal_cdf<T: Real>(x: T) -> T {
    lit::<T>(0.5) * (T::one() + (x * lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let pdf = (-(x * x) * lit(0.5)).exp() * lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    normal_cdf(x) + x * pdf
}
