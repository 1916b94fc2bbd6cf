use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::georaster::{BinaryMask, GeoRaster, GridSpec};
use super::routing::{flood_proportion, FloodCriterion};
use crate::error::{Error, Result};
use crate::segtrain::infer::{predict_masks, prepare_tile, tile_origins};
use crate::swin::SwinUnet;

/// Number of biennial epochs covered by the pipeline.
pub const NUM_EPOCHS: usize = 16;

/// Anything that maps standardized `tile×tile` inputs to binary masks.
pub trait Segmenter: Sync {
    fn segment(&self, tiles: &[Vec<f32>], tile: usize) -> Result<Vec<Vec<u8>>>;
}

impl Segmenter for SwinUnet<f32> {
    fn segment(&self, tiles: &[Vec<f32>], tile: usize) -> Result<Vec<Vec<u8>>> {
        predict_masks(self, tiles, tile, 4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Flood,
    NonFlood,
}

pub struct SegModels<'a> {
    pub flood: &'a dyn Segmenter,
    pub nonflood: &'a dyn Segmenter,
}

/// Which model produced one tile of an epoch mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub index: usize,
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
    pub model: ModelKind,
    pub flood_proportion: Option<f64>,
}

/// Binary lake mask of one epoch plus per-tile provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMask {
    pub epoch: usize,
    pub grid: GridSpec,
    pub mask: BinaryMask,
    pub provenance: Vec<TileRecord>,
}

impl EpochMask {
    pub fn new(
        epoch: usize,
        grid: GridSpec,
        mask: BinaryMask,
        provenance: Vec<TileRecord>,
    ) -> Result<Self> {
        if epoch >= NUM_EPOCHS {
            return Err(Error::Input(format!(
                "epoch {epoch} outside 0..{NUM_EPOCHS}"
            )));
        }
        if mask.width != grid.width || mask.height != grid.height {
            return Err(Error::Alignment("mask and grid extents differ".into()));
        }
        Ok(Self {
            epoch,
            grid,
            mask,
            provenance,
        })
    }

    /// Model that produced pixel `(col, row)`.
    pub fn model_at(&self, col: usize, row: usize) -> Option<ModelKind> {
        self.provenance
            .iter()
            .find(|t| {
                col >= t.col && col < t.col + t.width && row >= t.row && row < t.row + t.height
            })
            .map(|t| t.model)
    }

    pub fn save(&self, path: &Path, config: &serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({
            "epoch": self.epoch,
            "provenance": self.provenance,
            "config": config,
        });
        self.mask.to_raster(self.grid)?.save(path, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let (r, meta) = GeoRaster::from_bytes(&bytes)?;
        let epoch = meta
            .get("epoch")
            .and_then(|e| e.as_u64())
            .ok_or_else(|| Error::Format(format!("{} lacks an epoch index", path.display())))?;
        let provenance = match meta.get("provenance") {
            Some(p) => serde_json::from_value(p.clone())?,
            None => Vec::new(),
        };
        Self::new(
            epoch as usize,
            r.grid,
            BinaryMask::from_raster(&r),
            provenance,
        )
    }
}

/// Split into non-overlapping tiles, route each by the flood criterion,
/// segment with the chosen model and reassemble.
pub fn tile_and_infer(
    raster: &GeoRaster,
    epoch: usize,
    models: &SegModels<'_>,
    buffer: &BinaryMask,
    criterion: &FloodCriterion,
    tile: usize,
) -> Result<EpochMask> {
    if tile == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    if buffer.width != raster.width() || buffer.height != raster.height() {
        return Err(Error::Alignment(
            "river buffer does not match raster".into(),
        ));
    }
    let (w, h) = (raster.width(), raster.height());
    let origins = tile_origins(w, h, tile);
    let mut records = Vec::with_capacity(origins.len());
    let mut inputs = Vec::with_capacity(origins.len());
    for (index, &(col, row)) in origins.iter().enumerate() {
        let (tw, th) = (tile.min(w - col), tile.min(h - row));
        let sub = raster.crop_padded(col, row, tw, th);
        let sub_buf = BinaryMask {
            width: tw,
            height: th,
            data: (0..th)
                .flat_map(|r| (0..tw).map(move |c| (r, c)))
                .map(|(r, c)| buffer.data[(row + r) * w + col + c])
                .collect(),
        };
        let prop = flood_proportion(&sub, &sub_buf, criterion.freq_cutoff)?;
        let model = if prop.is_some_and(|p| p > criterion.threshold) {
            ModelKind::Flood
        } else {
            ModelKind::NonFlood
        };
        records.push(TileRecord {
            index,
            col,
            row,
            width: tw,
            height: th,
            model,
            flood_proportion: prop,
        });
        inputs.push(prepare_tile(raster, col, row, tile));
    }

    let predicted: Vec<Result<Vec<u8>>> = records
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(rec, input)| {
            let m = match rec.model {
                ModelKind::Flood => models.flood,
                ModelKind::NonFlood => models.nonflood,
            };
            let mut out = m.segment(std::slice::from_ref(input), tile)?;
            out.pop()
                .ok_or_else(|| Error::Contract("segmenter returned no mask".into()))
        })
        .collect();

    let mut mask = BinaryMask::zeros(w, h);
    for (rec, pred) in records.iter().zip(predicted) {
        let pred = pred?;
        if pred.len() != tile * tile {
            return Err(Error::dim("segment", &[pred.len()], &[tile * tile]));
        }
        for r in 0..rec.height {
            let dst = (rec.row + r) * w + rec.col;
            mask.data[dst..dst + rec.width].copy_from_slice(&pred[r * tile..r * tile + rec.width]);
        }
    }
    EpochMask::new(epoch, raster.grid, mask, records)
}
