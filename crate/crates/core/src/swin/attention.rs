use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::window::relative_position_index;
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{lit, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Multi-head self-attention inside `M×M` windows with a learned relative
/// position bias:
///
/// `Attention(Q, K, V) = SoftMax(Q·Kᵀ/√d + B)·V`, per head, heads
/// concatenated and passed through an output projection.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    /// `[(2M−1)², heads]`
    pub bias_table: ParamId,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
}

impl WindowAttention {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "{dim} channels not divisible by {heads} heads"
            )));
        }
        let span = 2 * window - 1;
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let table = Tensor::from_fn(vec![span * span, heads], |_| lit(normal.sample(rng)));
        Ok(Self {
            qkv: Linear::new(store, rng, &format!("{name}.qkv"), dim, 3 * dim, true),
            proj: Linear::new(store, rng, &format!("{name}.proj"), dim, dim, true),
            bias_table: store.add(format!("{name}.rel_bias"), table),
            dim,
            heads,
            window,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// The `[heads, N, N]` bias matrix gathered from the table.
    pub fn bias_matrix<T: Real>(&self, g: &mut Tape<T>) -> Result<Var> {
        let n = self.window * self.window;
        let h = self.heads;
        let rel = relative_position_index(self.window);
        let mut idx = Vec::with_capacity(h * n * n);
        for head in 0..h {
            idx.extend(rel.iter().map(|&r| r * h + head));
        }
        let table = g.p(self.bias_table);
        g.gather(table, idx.into(), vec![h, n, n])
    }

    /// Attend within each window of `x: [nWin, N, C]`.
    ///
    /// `mask`, when given, is `[nW, heads, N, N]` and is broadcast over the
    /// leading `nWin / nW` images.
    pub fn forward<T: Real>(&self, g: &mut Tape<T>, x: Var, mask: Option<Var>) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let n = self.window * self.window;
        if s.len() != 3 || s[1] != n || s[2] != self.dim {
            return Err(Error::dim("window_attention", &s, &[0, n, self.dim]));
        }
        let nwin = s[0];
        let (h, d, c) = (self.heads, self.head_dim(), self.dim);
        let qkv = self.qkv.forward(g, x)?;
        let split = |part: usize| -> Arc<[usize]> {
            let mut idx = Vec::with_capacity(nwin * h * n * d);
            for w in 0..nwin {
                for head in 0..h {
                    for tok in 0..n {
                        let base = (w * n + tok) * 3 * c + part * c + head * d;
                        idx.extend(base..base + d);
                    }
                }
            }
            idx.into()
        };
        let shape = vec![nwin * h, n, d];
        let q = g.gather(qkv, split(0), shape.clone())?;
        let k = g.gather(qkv, split(1), shape.clone())?;
        let v = g.gather(qkv, split(2), shape)?;
        let scores = g.bmm(q, k, true)?;
        let scores = g.scale(scores, lit(1.0 / (d as f64).sqrt()));
        let bias = self.bias_matrix(g)?;
        let mut scores = g.reshape(scores, vec![nwin, h, n, n])?;
        scores = g.add_suffix(scores, bias)?;
        if let Some(mask) = mask {
            let nw = g.shape(mask)[0];
            if nw == 0 || !nwin.is_multiple_of(nw) {
                return Err(Error::dim("attention mask", g.shape(mask), &s));
            }
            scores = g.reshape(scores, vec![nwin / nw, nw, h, n, n])?;
            scores = g.add_suffix(scores, mask)?;
        }
        let scores = g.reshape(scores, vec![nwin * h, n, n])?;
        let attn = g.softmax(scores)?;
        let out = g.bmm(attn, v, false)?;
        let mut idx = Vec::with_capacity(nwin * n * c);
        for w in 0..nwin {
            for tok in 0..n {
                for head in 0..h {
                    let base = ((w * h + head) * n + tok) * d;
                    idx.extend(base..base + d);
                }
            }
        }
        let merged = g.gather(out, idx.into(), vec![nwin, n, c])?;
        self.proj.forward(g, merged)
    }
}

/// Expand a `[nW, N, N]` mask across heads into a graph constant.
pub fn mask_constant<T: Real>(
    g: &mut Tape<T>,
    mask: &[f64],
    nw: usize,
    heads: usize,
    n: usize,
) -> Var {
    let mut data = Vec::with_capacity(nw * heads * n * n);
    for w in 0..nw {
        let block = &mask[w * n * n..(w + 1) * n * n];
        for _ in 0..heads {
            data.extend(block.iter().map(|&v| lit::<T>(v)));
        }
    }
    g.constant(Tensor::new(vec![nw, heads, n, n], data).expect("mask shape"))
}
