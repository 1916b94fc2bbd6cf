//! Run configuration: a flat text file of `key = value` lines where every
//! value is a JSON literal. Blank lines and `#` comments are ignored.
//!
//! ```text
//! seed = 7
//! variant = "swin-unet-test"
//! tile_size = 64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastConfig;
use crate::raster::FloodCriterion;
use crate::segtrain::{SegTrainConfig, TverskyParams};
use crate::swin::SwinConfig;
use crate::vector::{MatchParams, MAX_INTERPOLATED_RUN, WIDE_RIVER_M};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub raster_dir: String,
    pub vector_dir: String,
    pub climate_csv: String,
    pub checkpoint_dir: String,
    pub output_dir: String,

    pub variant: String,
    pub tile_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub augment: bool,
    pub train_fraction: f64,

    pub flood_freq_cutoff: f64,
    pub flood_threshold: f64,
    pub buffer_margin_px: usize,
    pub min_river_width_m: f64,
    pub match_threshold: f64,
    pub max_interp_run: usize,

    pub window_len: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub forecast_epochs: usize,
    pub forecast_batch_size: usize,
    pub forecast_lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seg = SegTrainConfig::default();
        let flood = FloodCriterion::default();
        let fc = ForecastConfig::default();
        Self {
            seed: 0,
            raster_dir: "rasters".into(),
            vector_dir: "vectors".into(),
            climate_csv: "climate.csv".into(),
            checkpoint_dir: "checkpoints".into(),
            output_dir: "out".into(),
            variant: "swin-unet-s".into(),
            tile_size: seg.tile_size,
            alpha: seg.tversky.alpha,
            beta: seg.tversky.beta,
            lr: seg.lr,
            patience: seg.patience,
            factor: seg.decay_factor,
            min_lr: seg.min_lr,
            batch_size: seg.batch_size,
            epochs: seg.epochs,
            augment: seg.augment,
            train_fraction: 0.8,
            flood_freq_cutoff: flood.freq_cutoff,
            flood_threshold: flood.threshold,
            buffer_margin_px: flood.buffer_margin_px,
            min_river_width_m: WIDE_RIVER_M,
            match_threshold: MatchParams::default().min_overlap,
            max_interp_run: MAX_INTERPOLATED_RUN,
            window_len: fc.window_len,
            hidden: fc.hidden,
            lstm_layers: fc.layers,
            forecast_epochs: fc.epochs,
            forecast_batch_size: fc.batch_size,
            forecast_lr: fc.lr,
        }
    }
}

impl RunConfig {
    /// Parse the flat format. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            let value: serde_json::Value = serde_json::from_str(value.trim()).map_err(|e| {
                Error::Config(format!("line {}: value of {key:?} is not JSON: {e}", n + 1))
            })?;
            if map.insert(key.to_string(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: {key:?} given twice",
                    n + 1
                )));
            }
        }
        let cfg: RunConfig = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the flat format, one key per line in field order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Ok(serde_json::Value::Object(m)) = serde_json::to_value(self) {
            for (k, v) in m {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Full configuration as JSON, for provenance in output metadata.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    pub fn validate(&self) -> Result<()> {
        self.seg_train()?.validate()?;
        self.forecast()?.validate()?;
        SwinConfig::variant(&self.variant)?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.flood_freq_cutoff)
            || !(0.0..=1.0).contains(&self.flood_threshold)
        {
            return Err(Error::Config(
                "flood_freq_cutoff and flood_threshold must lie in [0, 1]".into(),
            ));
        }
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "match_threshold must be in (0, 1], got {}",
                self.match_threshold
            )));
        }
        if !(self.min_river_width_m >= 0.0) {
            return Err(Error::Config(
                "min_river_width_m must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Architecture of the configured variant, resized to `tile_size`.
    pub fn swin(&self) -> Result<SwinConfig> {
        let mut c = SwinConfig::variant(&self.variant)?;
        c.input_size = self.tile_size;
        c.validate()?;
        Ok(c)
    }

    pub fn seg_train(&self) -> Result<SegTrainConfig> {
        Ok(SegTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            decay_factor: self.factor,
            min_lr: self.min_lr,
            tversky: TverskyParams::new(self.alpha, self.beta)?,
            tile_size: self.tile_size,
            augment: self.augment,
            seed: self.seed,
        })
    }

    pub fn flood(&self) -> FloodCriterion {
        FloodCriterion {
            freq_cutoff: self.flood_freq_cutoff,
            threshold: self.flood_threshold,
            buffer_margin_px: self.buffer_margin_px,
        }
    }

    pub fn matching(&self) -> MatchParams {
        MatchParams {
            min_overlap: self.match_threshold,
        }
    }

    pub fn forecast(&self) -> Result<ForecastConfig> {
        Ok(ForecastConfig {
            window_len: self.window_len,
            hidden: self.hidden,
            layers: self.lstm_layers,
            epochs: self.forecast_epochs,
            batch_size: self.forecast_batch_size,
            lr: self.forecast_lr,
            train_fraction: self.train_fraction,
            seed: self.seed,
        })
    }
}
