//! Tile extraction and batched argmax prediction shared by evaluation and
//! raster inference.

use super::augment::standardize;
use crate::error::Result;
use crate::raster::GeoRaster;
use crate::swin::SwinUnet;
use crate::tensor::{Real, Tensor};

/// Top-left corners of the non-overlapping `tile×tile` cover of a
/// `width×height` grid, row-major.
pub fn tile_origins(width: usize, height: usize, tile: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for row in (0..height).step_by(tile) {
        for col in (0..width).step_by(tile) {
            out.push((col, row));
        }
    }
    out
}

/// Crop a tile (nodata filled with zero, zero-padded past the edge) and
/// standardize it.
pub fn prepare_tile(raster: &GeoRaster, col: usize, row: usize, tile: usize) -> Vec<f32> {
    let crop = raster.crop_padded(col, row, tile, tile);
    standardize(&crop.values_or(0.0))
}

/// Per-pixel softmax over two-class logits: probability of class 0.
pub fn p_background<T: Real>(logits: &Tensor<T>) -> Vec<f64> {
    logits
        .data()
        .chunks(2)
        .map(|z| {
            let (a, b) = (z[0].to_f64().unwrap_or(0.0), z[1].to_f64().unwrap_or(0.0));
            1.0 / (1.0 + (b - a).exp())
        })
        .collect()
}

/// Logits for each prepared tile, evaluated `batch` tiles at a time; one
/// `[tile·tile, classes]` tensor per tile.
pub fn tile_logits<T: Real>(
    model: &SwinUnet<T>,
    tiles: &[Vec<f32>],
    tile: usize,
    batch: usize,
) -> Result<Vec<Tensor<T>>> {
    let px = tile * tile;
    let classes = model.config.num_classes;
    let mut out = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(batch.max(1)) {
        let data = chunk
            .iter()
            .flat_map(|t| t.iter().map(|&v| T::from_f64_lossy(f64::from(v))))
            .collect();
        let x = Tensor::new(
            vec![chunk.len(), tile, tile, model.config.in_channels],
            data,
        )?;
        let logits = model.predict(&x)?;
        for part in logits.data().chunks(px * classes) {
            out.push(Tensor::new(vec![px, classes], part.to_vec())?);
        }
    }
    Ok(out)
}

/// Binary masks (argmax == 1) for each prepared tile.
pub fn predict_masks<T: Real>(
    model: &SwinUnet<T>,
    tiles: &[Vec<f32>],
    tile: usize,
    batch: usize,
) -> Result<Vec<Vec<u8>>> {
    Ok(tile_logits(model, tiles, tile, batch)?
        .iter()
        .map(|l| {
            l.argmax_lastdim()
                .into_iter()
                .map(|c| u8::from(c == 1))
                .collect()
        })
        .collect())
}
