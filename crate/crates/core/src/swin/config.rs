use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of a Swin-Unet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwinConfig {
    pub name: String,
    pub patch_size: usize,
    pub window_size: usize,
    pub depths: Vec<usize>,
    pub heads: Vec<usize>,
    pub embed_dim: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub mlp_ratio: usize,
    /// Edge length of the square training/inference tile.
    pub input_size: usize,
}

impl SwinConfig {
    /// Named variants. `t`, `s` and `l` follow the published table verbatim
    /// (including its ordering, where `t` carries the most blocks and heads);
    /// `test` is the reduced harness model.
    pub fn variant(name: &str) -> Result<Self> {
        let (depths, heads) = match name {
            "swin-unet-t" => (vec![2, 4, 6, 8, 10], vec![12, 24, 48, 96, 192]),
            "swin-unet-s" => (vec![2, 2, 4, 6, 8], vec![6, 12, 24, 48, 96]),
            "swin-unet-l" => (vec![2, 2, 2, 4, 6], vec![3, 6, 12, 24, 48]),
            "swin-unet-test" => {
                return Ok(Self {
                    name: name.into(),
                    patch_size: 4,
                    window_size: 4,
                    depths: vec![2, 2, 2],
                    heads: vec![2, 4, 8],
                    embed_dim: 16,
                    in_channels: 1,
                    num_classes: 2,
                    mlp_ratio: 4,
                    input_size: 64,
                })
            }
            other => return Err(Error::Config(format!("unknown model variant {other:?}"))),
        };
        Ok(Self {
            name: name.into(),
            patch_size: 4,
            window_size: 7,
            depths,
            heads,
            embed_dim: 96,
            in_channels: 1,
            num_classes: 2,
            mlp_ratio: 4,
            input_size: 512,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.depths.len()
    }

    /// Channel width of stage `s`.
    pub fn stage_dim(&self, s: usize) -> usize {
        self.embed_dim << s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depths.is_empty() || self.depths.len() != self.heads.len() {
            return bad(format!(
                "depths ({}) and heads ({}) must list one entry per stage",
                self.depths.len(),
                self.heads.len()
            ));
        }
        if self.patch_size == 0 || self.window_size == 0 || self.embed_dim == 0 {
            return bad("patch size, window size and embed_dim must be positive".into());
        }
        if self.mlp_ratio == 0 || self.num_classes < 2 || self.in_channels == 0 {
            return bad("mlp_ratio, num_classes and in_channels out of range".into());
        }
        for (s, (&d, &h)) in self.depths.iter().zip(&self.heads).enumerate() {
            if d == 0 || d % 2 != 0 {
                return bad(format!(
                    "stage {s} depth {d} must be even (W-MSA/SW-MSA pairs)"
                ));
            }
            if h == 0 || !self.stage_dim(s).is_multiple_of(h) {
                return bad(format!(
                    "stage {s}: {} channels not divisible by {h} heads",
                    self.stage_dim(s)
                ));
            }
        }
        let reduction = self.patch_size << (self.num_stages() - 1);
        if !self.input_size.is_multiple_of(reduction) {
            return bad(format!(
                "input size {} must be divisible by {reduction}",
                self.input_size
            ));
        }
        Ok(())
    }
}
