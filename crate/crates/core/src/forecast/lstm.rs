use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::glorot;
use crate::tensor::{ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Weights of one LSTM layer: four `[(input+hidden), hidden]` matrices and
/// four `[hidden]` biases.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let rows = input + hidden;
        let mut w = |g: &str| store.add(format!("{name}.w_{g}"), glorot(rng, rows, hidden));
        let (w_f, w_i, w_o, w_c) = (w("f"), w("i"), w("o"), w("c"));
        let mut b = |g: &str| store.add(format!("{name}.b_{g}"), Tensor::zeros(vec![hidden]));
        let (b_f, b_i, b_o, b_c) = (b("f"), b("i"), b("o"), b("c"));
        Self {
            w_f,
            w_i,
            w_o,
            w_c,
            b_f,
            b_i,
            b_o,
            b_c,
            input,
            hidden,
        }
    }

    /// One step: gates from `[X_t, H_{t−1}]`, then
    /// `C_t = F⊙C_{t−1} + I⊙C̃` and `H_t = O⊙tanh(C_t)`.
    pub fn cell<T: Real>(&self, g: &mut Tape<T>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let xs = g.shape(x).to_vec();
        let hs = g.shape(h).to_vec();
        if xs.len() != 2
            || xs[1] != self.input
            || hs != [xs[0], self.hidden]
            || g.shape(c) != hs.as_slice()
        {
            return Err(Error::dim("lstm_cell", &xs, &hs));
        }
        let xh = g.concat(&[x, h])?;
        let gate = |g: &mut Tape<T>, w: ParamId, b: ParamId| {
            let (w, b) = (g.p(w), g.p(b));
            g.linear(xh, w, Some(b))
        };
        let f = gate(g, self.w_f, self.b_f)?;
        let i = gate(g, self.w_i, self.b_i)?;
        let o = gate(g, self.w_o, self.b_o)?;
        let cand = gate(g, self.w_c, self.b_c)?;
        let f = g.sigmoid(f);
        let i = g.sigmoid(i);
        let o = g.sigmoid(o);
        let cand = g.tanh(cand);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_t = g.add(keep, write)?;
        let tc = g.tanh(c_t);
        let h_t = g.mul(o, tc)?;
        Ok((h_t, c_t))
    }
}
