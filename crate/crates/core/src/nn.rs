//! Parameterized building blocks shared by the segmentation and forecasting
//! networks.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{lit, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Glorot-uniform weights of shape `[fan_in, fan_out]`.
pub fn glorot<T: Real, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(vec![fan_in, fan_out], |_| lit(rng.gen_range(-limit..limit)))
}

/// `y = x·W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, in_dim, out_dim));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = g.p(self.weight);
        let b = self.bias.map(|b| g.p(b));
        g.linear(x, w, b)
    }
}

/// Learnable affine LayerNorm over the last axis.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(vec![dim])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![dim])),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, x: Var) -> Result<Var> {
        let (gm, bt) = (g.p(self.gamma), g.p(self.beta));
        g.layer_norm(x, gm, bt)
    }
}

/// Mean squared error between two same-shape tensors.
pub fn mse<T: Real>(g: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}
