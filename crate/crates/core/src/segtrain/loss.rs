use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{lit, Real, Tape, Tensor, Var};

/// Weights of the two error terms of the Tversky index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TverskyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TverskyParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.7,
        }
    }
}

impl TverskyParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::Config(format!(
                "tversky weights must be non-negative with positive sum, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// `1 − T` where `T = Σp₀g₀ / (Σp₀g₀ + αΣp₀g₁ + βΣp₁g₀)`.
///
/// `probs` is `[N, 2]` (column 0 = non-lake); `labels` holds `1` for lake
/// pixels, so `g₀ = 1 − label` and `g₁ = label`.
pub fn tversky_loss<T: Real>(
    g: &mut Tape<T>,
    probs: Var,
    labels: &[u8],
    p: TverskyParams,
) -> Result<Var> {
    p.validate()?;
    let s = g.shape(probs).to_vec();
    if s.len() != 2 || s[1] != 2 || s[0] != labels.len() {
        return Err(Error::dim("tversky_loss", &s, &[labels.len(), 2]));
    }
    if labels.is_empty() {
        return Err(Error::Contract(
            "tversky loss over an empty pixel set".into(),
        ));
    }
    let n = labels.len();
    let g1 = Tensor::from_fn(vec![n, 1], |i| lit::<T>(f64::from(labels[i])));
    let g0 = g1.map(|v| T::one() - v);
    let g0 = g.constant(g0);
    let g1 = g.constant(g1);
    let p0 = g.slice_lastdim(probs, 0, 1)?;
    let p1 = g.slice_lastdim(probs, 1, 1)?;

    let tp = g.mul(p0, g0)?;
    let tp = g.sum(tp);
    let missed = g.mul(p0, g1)?;
    let missed = g.sum(missed);
    let false_pos = g.mul(p1, g0)?;
    let false_pos = g.sum(false_pos);

    let a = g.scale(missed, lit(p.alpha));
    let b = g.scale(false_pos, lit(p.beta));
    let den = g.add(tp, a)?;
    let mut den = g.add(den, b)?;
    if g.value(den).data()[0] == T::zero() {
        let tiny = g.constant(Tensor::scalar(T::min_positive_value()));
        den = g.add(den, tiny)?;
    }
    let t = g.div(tp, den)?;
    let one = g.constant(Tensor::scalar(T::one()));
    g.sub(one, t)
}

/// Dice coefficient of the non-lake class, `2Σp₀g₀ / (Σp₀ + Σg₀)`.
pub fn dice_score(p0: &[f64], labels: &[u8]) -> f64 {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut sg = 0.0;
    for (&p, &l) in p0.iter().zip(labels) {
        let g0 = 1.0 - f64::from(l);
        inter += p * g0;
        sp += p;
        sg += g0;
    }
    2.0 * inter / (sp + sg)
}
