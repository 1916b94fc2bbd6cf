use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::block::{FeatureMap, PatchExpand, PatchMerge, SwinStage};
use super::config::SwinConfig;
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Linear};
use crate::tensor::{checkpoint, ParamStore, Real, Tape, Tensor, Var};

/// Linear embedding of non-overlapping `p×p` patches.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub patch: usize,
    pub in_channels: usize,
}

impl PatchEmbed {
    /// Gather index flattening each patch of a `[B,H,W,Cin]` image into one
    /// row of `p·p·Cin` values (row-major inside the patch).
    pub fn patch_index(batch: usize, h: usize, w: usize, cin: usize, p: usize) -> Vec<usize> {
        let (hp, wp) = (h / p, w / p);
        let mut idx = Vec::with_capacity(batch * h * w * cin);
        for b in 0..batch {
            for i in 0..hp {
                for j in 0..wp {
                    for dr in 0..p {
                        let base = ((b * h + i * p + dr) * w + j * p) * cin;
                        idx.extend(base..base + p * cin);
                    }
                }
            }
        }
        idx
    }

    /// `image` is `[B, H, W, Cin]`.
    pub fn forward<T: Real>(&self, g: &mut Tape<T>, image: Var) -> Result<FeatureMap> {
        let s = g.shape(image).to_vec();
        let p = self.patch;
        if s.len() != 4
            || s[3] != self.in_channels
            || !s[1].is_multiple_of(p)
            || !s[2].is_multiple_of(p)
        {
            return Err(Error::dim("patch_embed", &s, &[0, p, p, self.in_channels]));
        }
        let (b, h, w) = (s[0], s[1], s[2]);
        let idx = Self::patch_index(b, h, w, self.in_channels, p);
        let rows = b * (h / p) * (w / p);
        let patches = g.gather(image, idx.into(), vec![rows, p * p * self.in_channels])?;
        let tokens = self.proj.forward(g, patches)?;
        FeatureMap::new(g, tokens, b, h / p, w / p)
    }
}

/// U-shaped hierarchy of Swin Transformer stages with patch merging on the
/// way down, patch expanding on the way up and concat-then-project skip
/// fusion at each matching resolution.
#[derive(Clone, Debug)]
pub struct SwinUnet<T> {
    pub config: SwinConfig,
    pub params: ParamStore<T>,
    pub embed: PatchEmbed,
    pub encoder: Vec<SwinStage>,
    pub merges: Vec<PatchMerge>,
    pub expands: Vec<PatchExpand>,
    pub fuse: Vec<Linear>,
    pub decoder: Vec<SwinStage>,
    pub norm: LayerNorm,
    pub final_expand: PatchExpand,
    pub head: Linear,
}

impl<T: Real> SwinUnet<T> {
    pub fn new(config: SwinConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c0 = config.embed_dim;
        let p = config.patch_size;
        let s_count = config.num_stages();
        let embed = PatchEmbed {
            proj: Linear::new(
                &mut store,
                &mut rng,
                "embed",
                p * p * config.in_channels,
                c0,
                true,
            ),
            patch: p,
            in_channels: config.in_channels,
        };
        let mut encoder = Vec::new();
        let mut merges = Vec::new();
        for s in 0..s_count {
            let dim = config.stage_dim(s);
            encoder.push(SwinStage::new(
                &mut store,
                &mut rng,
                &format!("enc{s}"),
                config.depths[s],
                dim,
                config.heads[s],
                config.window_size,
                config.mlp_ratio,
            )?);
            if s + 1 < s_count {
                merges.push(PatchMerge::new(
                    &mut store,
                    &mut rng,
                    &format!("merge{s}"),
                    dim,
                    false,
                ));
            }
        }
        let mut expands = Vec::new();
        let mut fuse = Vec::new();
        let mut decoder = Vec::new();
        for s in 0..s_count.saturating_sub(1) {
            let dim = config.stage_dim(s);
            expands.push(PatchExpand::new(
                &mut store,
                &mut rng,
                &format!("up{s}"),
                config.stage_dim(s + 1),
            )?);
            fuse.push(Linear::new(
                &mut store,
                &mut rng,
                &format!("fuse{s}"),
                2 * dim,
                dim,
                true,
            ));
            decoder.push(SwinStage::new(
                &mut store,
                &mut rng,
                &format!("dec{s}"),
                config.depths[s],
                dim,
                config.heads[s],
                config.window_size,
                config.mlp_ratio,
            )?);
        }
        let norm = LayerNorm::new(&mut store, "norm_up", c0);
        let final_expand = PatchExpand::final_expand(&mut store, &mut rng, "final", c0, p);
        let head = Linear::new(&mut store, &mut rng, "head", c0, config.num_classes, true);
        Ok(Self {
            config,
            params: store,
            embed,
            encoder,
            merges,
            expands,
            fuse,
            decoder,
            norm,
            final_expand,
            head,
        })
    }

    /// Logits `[B·H·W, classes]` for `image: [B, H, W, Cin]`, recorded on `g`
    /// (which must have been bound to `self.params`).
    pub fn forward(&self, g: &mut Tape<T>, image: Var) -> Result<Var> {
        let mut fm = self.embed.forward(g, image)?;
        let reduction = 1usize << (self.encoder.len() - 1);
        if fm.h % reduction != 0 || fm.w % reduction != 0 {
            return Err(Error::dim(
                "forward_segment",
                g.shape(image),
                &[self.config.patch_size * reduction],
            ));
        }
        let mut skips = Vec::with_capacity(self.encoder.len());
        for (s, stage) in self.encoder.iter().enumerate() {
            fm = stage.forward(g, fm)?;
            if s < self.merges.len() {
                skips.push(fm);
                fm = self.merges[s].forward(g, fm)?;
            }
        }
        for s in (0..self.decoder.len()).rev() {
            fm = self.expands[s].forward(g, fm)?;
            let skip = skips[s];
            let cat = g.concat(&[fm.tokens, skip.tokens])?;
            let fused = self.fuse[s].forward(g, cat)?;
            fm = self.decoder[s].forward(g, fm.with_tokens(fused, skip.c))?;
        }
        let normed = self.norm.forward(g, fm.tokens)?;
        fm = self.final_expand.forward(g, fm.with_tokens(normed, fm.c))?;
        self.head.forward(g, fm.tokens)
    }

    /// Inference without gradient tracking: `images` is `[B, H, W, Cin]`,
    /// result `[B·H·W, classes]`.
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Tape::bind(&self.params, false);
        let x = g.constant(images.clone());
        let y = self.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    pub fn checkpoint_meta(&self, extra: serde_json::Value) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "kind": "swin-unet",
            "config": serde_json::to_value(&self.config)?,
            "extra": extra,
        }))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        checkpoint::save(path, &self.params, &self.checkpoint_meta(extra)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let manifest = checkpoint::read_manifest(&bytes)?;
        if manifest.meta.get("kind").and_then(|k| k.as_str()) != Some("swin-unet") {
            return Err(Error::Format(format!(
                "{} is not a segmentation checkpoint",
                path.display()
            )));
        }
        let config: SwinConfig = serde_json::from_value(
            manifest
                .meta
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Format("checkpoint lacks model config".into()))?,
        )?;
        let mut model = Self::new(config, 0)?;
        checkpoint::load_into(&bytes, &mut model.params)?;
        Ok(model)
    }
}
