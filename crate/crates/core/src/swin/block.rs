use std::sync::Arc;

use rand::Rng;

use super::attention::{mask_constant, WindowAttention};
use super::window::{channels_of, WindowGrid};
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Linear};
use crate::tensor::{ParamStore, Real, Tape, Var};

/// Tokens of a batch of spatial maps, stored `[B·H·W, C]`.
#[derive(Clone, Copy, Debug)]
pub struct FeatureMap {
    pub tokens: Var,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl FeatureMap {
    pub fn new<T: Real>(
        g: &Tape<T>,
        tokens: Var,
        batch: usize,
        h: usize,
        w: usize,
    ) -> Result<Self> {
        let c = channels_of(g, tokens, batch * h * w)?;
        Ok(Self {
            tokens,
            batch,
            h,
            w,
            c,
        })
    }

    pub fn with_tokens(self, tokens: Var, c: usize) -> Self {
        Self { tokens, c, ..self }
    }
}

/// One Swin Transformer block: pre-norm (shifted-)window attention and a
/// pre-norm GELU MLP, each wrapped in a residual connection.
#[derive(Clone, Debug)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub window: usize,
    pub shift: usize,
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
        shifted: bool,
        mlp_ratio: usize,
    ) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            attn: WindowAttention::new(store, rng, &format!("{name}.attn"), dim, heads, window)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            fc1: Linear::new(
                store,
                rng,
                &format!("{name}.fc1"),
                dim,
                dim * mlp_ratio,
                true,
            ),
            fc2: Linear::new(
                store,
                rng,
                &format!("{name}.fc2"),
                dim * mlp_ratio,
                dim,
                true,
            ),
            window,
            shift: if shifted { window / 2 } else { 0 },
        })
    }

    /// Window geometry used on an `h×w` map. A map that fits in a single
    /// window is not shifted.
    pub fn grid(&self, h: usize, w: usize) -> WindowGrid {
        let g = WindowGrid::new(h, w, self.window, self.shift);
        if g.hp == self.window && g.wp == self.window {
            WindowGrid::new(h, w, self.window, 0)
        } else {
            g
        }
    }

    /// The attention sub-block: `ẑ = (S)W-MSA(LN(z)) + z`.
    pub fn attention<T: Real>(&self, g: &mut Tape<T>, fm: FeatureMap) -> Result<FeatureMap> {
        let grid = self.grid(fm.h, fm.w);
        let ln = self.norm1.forward(g, fm.tokens)?;
        let n = grid.tokens_per_window();
        let nwin = fm.batch * grid.windows_per_image();
        let part: Arc<[usize]> = grid.partition_index(fm.batch, fm.c).into();
        let windows = g.gather(ln, part, vec![nwin, n, fm.c])?;
        let mask = grid
            .mask()
            .map(|m| mask_constant(g, &m, grid.windows_per_image(), self.attn.heads, n));
        let attended = self.attn.forward(g, windows, mask)?;
        let rev: Arc<[usize]> = grid.reverse_index(fm.batch, fm.c).into();
        let back = g.gather(attended, rev, vec![fm.batch * fm.h * fm.w, fm.c])?;
        let out = g.add(fm.tokens, back)?;
        Ok(fm.with_tokens(out, fm.c))
    }

    /// The MLP sub-block: `z = MLP(LN(ẑ)) + ẑ`.
    pub fn mlp<T: Real>(&self, g: &mut Tape<T>, fm: FeatureMap) -> Result<FeatureMap> {
        let ln = self.norm2.forward(g, fm.tokens)?;
        let hidden = self.fc1.forward(g, ln)?;
        let hidden = g.gelu(hidden);
        let out = self.fc2.forward(g, hidden)?;
        let out = g.add(fm.tokens, out)?;
        Ok(fm.with_tokens(out, fm.c))
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, fm: FeatureMap) -> Result<FeatureMap> {
        let fm = self.attention(g, fm)?;
        self.mlp(g, fm)
    }
}

/// A stack of alternating W-MSA / SW-MSA blocks at one resolution.
#[derive(Clone, Debug)]
pub struct SwinStage {
    pub blocks: Vec<SwinBlock>,
}

impl SwinStage {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        window: usize,
        mlp_ratio: usize,
    ) -> Result<Self> {
        if !depth.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{name}: depth {depth} cannot be split into W-MSA/SW-MSA pairs"
            )));
        }
        let blocks = (0..depth)
            .map(|i| {
                SwinBlock::new(
                    store,
                    rng,
                    &format!("{name}.block{i}"),
                    dim,
                    heads,
                    window,
                    i % 2 == 1,
                    mlp_ratio,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, mut fm: FeatureMap) -> Result<FeatureMap> {
        for b in &self.blocks {
            fm = b.forward(g, fm)?;
        }
        Ok(fm)
    }
}

/// Consecutive W-MSA and SW-MSA blocks.
pub fn swin_block_pair<T: Real>(
    g: &mut Tape<T>,
    fm: FeatureMap,
    pair: &[SwinBlock],
) -> Result<FeatureMap> {
    match pair {
        [first, second] if first.shift == 0 && second.shift > 0 => {
            let fm = first.forward(g, fm)?;
            second.forward(g, fm)
        }
        _ => Err(Error::Config(
            "a block pair is one W-MSA block followed by one SW-MSA block".into(),
        )),
    }
}

/// 2× downsampling: concatenate each 2×2 group (4C) and project to 2C.
#[derive(Clone, Debug)]
pub struct PatchMerge {
    pub reduction: Linear,
}

impl PatchMerge {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
        bias: bool,
    ) -> Self {
        Self {
            reduction: Linear::new(
                store,
                rng,
                &format!("{name}.reduction"),
                4 * dim,
                2 * dim,
                bias,
            ),
        }
    }

    /// Gather index for the 2×2 concatenation, group order
    /// `(2i,2j), (2i+1,2j), (2i,2j+1), (2i+1,2j+1)`.
    pub fn group_index(batch: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
        let (ho, wo) = (h / 2, w / 2);
        let mut idx = Vec::with_capacity(batch * h * w * c);
        for b in 0..batch {
            for i in 0..ho {
                for j in 0..wo {
                    for (dr, dc) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let base = ((b * h + 2 * i + dr) * w + 2 * j + dc) * c;
                        idx.extend(base..base + c);
                    }
                }
            }
        }
        idx
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, fm: FeatureMap) -> Result<FeatureMap> {
        if !fm.h.is_multiple_of(2) || !fm.w.is_multiple_of(2) {
            return Err(Error::dim("patch_merge", &[fm.h, fm.w], &[2, 2]));
        }
        let (ho, wo) = (fm.h / 2, fm.w / 2);
        let idx = Self::group_index(fm.batch, fm.h, fm.w, fm.c);
        let grouped = g.gather(fm.tokens, idx.into(), vec![fm.batch * ho * wo, 4 * fm.c])?;
        let out = self.reduction.forward(g, grouped)?;
        Ok(FeatureMap {
            tokens: out,
            batch: fm.batch,
            h: ho,
            w: wo,
            c: 2 * fm.c,
        })
    }
}

/// `factor`× upsampling: project C to `factor²·C_out`, then rearrange each
/// token's channel blocks into a `factor×factor` block of tokens.
#[derive(Clone, Debug)]
pub struct PatchExpand {
    pub expand: Linear,
    pub factor: usize,
    pub out_dim: usize,
}

impl PatchExpand {
    /// Standard decoder expand: `[H,W,C] → [2H,2W,C/2]`.
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
    ) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "patch expand needs even channels, got {dim}"
            )));
        }
        Ok(Self {
            expand: Linear::new(store, rng, &format!("{name}.expand"), dim, 2 * dim, false),
            factor: 2,
            out_dim: dim / 2,
        })
    }

    /// Final expand back to pixel resolution: `[H,W,C] → [fH,fW,C]`.
    pub fn final_expand<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
        factor: usize,
    ) -> Self {
        Self {
            expand: Linear::new(
                store,
                rng,
                &format!("{name}.expand"),
                dim,
                factor * factor * dim,
                false,
            ),
            factor,
            out_dim: dim,
        }
    }

    pub fn rearrange_index(
        batch: usize,
        h: usize,
        w: usize,
        factor: usize,
        c: usize,
    ) -> Vec<usize> {
        let (ho, wo) = (h * factor, w * factor);
        let width = factor * factor * c;
        let mut idx = Vec::with_capacity(batch * ho * wo * c);
        for b in 0..batch {
            for r in 0..ho {
                for col in 0..wo {
                    let (i, p1) = (r / factor, r % factor);
                    let (j, p2) = (col / factor, col % factor);
                    let base = ((b * h + i) * w + j) * width + (p1 * factor + p2) * c;
                    idx.extend(base..base + c);
                }
            }
        }
        idx
    }

    pub fn forward<T: Real>(&self, g: &mut Tape<T>, fm: FeatureMap) -> Result<FeatureMap> {
        if fm.c != self.expand.in_dim {
            return Err(Error::dim("patch_expand", &[fm.c], &[self.expand.in_dim]));
        }
        let expanded = self.expand.forward(g, fm.tokens)?;
        let f = self.factor;
        let idx = Self::rearrange_index(fm.batch, fm.h, fm.w, f, self.out_dim);
        let tokens = g.gather(
            expanded,
            idx.into(),
            vec![fm.batch * fm.h * f * fm.w * f, self.out_dim],
        )?;
        Ok(FeatureMap {
            tokens,
            batch: fm.batch,
            h: fm.h * f,
            w: fm.w * f,
            c: self.out_dim,
        })
    }
}
