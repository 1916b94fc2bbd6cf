use rand::Rng;

use super::dataset::Sample;
use crate::error::Result;
use crate::raster::{BinaryMask, GeoRaster};

/// Floor on the standard deviation used for standardization.
pub const STD_EPS: f32 = 1e-6;

/// Subtract the mean and divide by `max(std, ε)` (population std).
pub fn standardize(values: &[f32]) -> Vec<f32> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = (var.sqrt() as f32).max(STD_EPS);
    values
        .iter()
        .map(|&v| (f64::from(v) - mean) as f32 / std)
        .collect()
}

/// Random pad to at least `tile`, per-image standardization, random
/// `tile×tile` crop, then independent horizontal and vertical flips applied
/// to image and label alike. Nodata pixels enter as zero frequency.
pub fn augment<R: Rng>(sample: &Sample, tile: usize, rng: &mut R) -> Result<Sample> {
    let (w, h) = (sample.image.width(), sample.image.height());
    let (pw, ph) = (w.max(tile), h.max(tile));
    let off_x = rng.gen_range(0..=pw - w);
    let off_y = rng.gen_range(0..=ph - h);

    let values = sample.image.values_or(0.0);
    let mut padded = vec![0.0f32; pw * ph];
    let mut label = vec![0u8; pw * ph];
    for r in 0..h {
        let dst = (r + off_y) * pw + off_x;
        padded[dst..dst + w].copy_from_slice(&values[r * w..(r + 1) * w]);
        label[dst..dst + w].copy_from_slice(&sample.label.data[r * w..(r + 1) * w]);
    }
    let padded = standardize(&padded);

    let cx = rng.gen_range(0..=pw - tile);
    let cy = rng.gen_range(0..=ph - tile);
    let flip_h = rng.gen_bool(0.5);
    let flip_v = rng.gen_bool(0.5);

    let mut out_img = vec![0.0f32; tile * tile];
    let mut out_lab = vec![0u8; tile * tile];
    for r in 0..tile {
        let sr = cy + if flip_v { tile - 1 - r } else { r };
        for c in 0..tile {
            let sc = cx + if flip_h { tile - 1 - c } else { c };
            out_img[r * tile + c] = padded[sr * pw + sc];
            out_lab[r * tile + c] = label[sr * pw + sc];
        }
    }
    let col = cx as isize - off_x as isize;
    let row = cy as isize - off_y as isize;
    let mut grid = sample.image.grid;
    grid.origin_lon += col as f64 * grid.pixel_deg;
    grid.origin_lat -= row as f64 * grid.pixel_deg;
    grid.width = tile;
    grid.height = tile;
    Sample::new(
        GeoRaster::from_data(grid, out_img)?,
        BinaryMask::new(tile, tile, out_lab)?,
        sample.flood,
    )
}
