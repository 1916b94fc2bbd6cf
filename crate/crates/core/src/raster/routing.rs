use serde::{Deserialize, Serialize};

use super::georaster::{BinaryMask, GeoRaster, GridSpec, EARTH_RADIUS_KM};
use crate::error::{Error, Result};
use crate::geom::Point;

/// River centerline in lon/lat with its channel width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct River {
    pub points: Vec<Point>,
    pub width_m: f64,
}

/// Thresholds of the flood-prone test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloodCriterion {
    /// Frequencies below this count as seasonally inundated.
    pub freq_cutoff: f64,
    /// Route to the flood model when the seasonal share exceeds this.
    pub threshold: f64,
    /// Extra dilation around each river, in pixels.
    pub buffer_margin_px: usize,
}

impl Default for FloodCriterion {
    fn default() -> Self {
        Self {
            freq_cutoff: 0.75,
            threshold: 0.1,
            buffer_margin_px: 2,
        }
    }
}

/// Channel width in pixels of `grid` (north–south pixel extent).
pub fn width_in_pixels(grid: &GridSpec, width_m: f64) -> f64 {
    let px_m = EARTH_RADIUS_KM * 1000.0 * grid.pixel_deg.to_radians();
    width_m / px_m
}

/// Rasterized centerlines, each dilated by `⌈width/2⌉ + margin` pixels.
pub fn river_buffer(grid: &GridSpec, rivers: &[River], margin_px: usize) -> BinaryMask {
    let mut mask = BinaryMask::zeros(grid.width, grid.height);
    for river in rivers {
        let radius = (width_in_pixels(grid, river.width_m) / 2.0 - 1e-9)
            .ceil()
            .max(0.0) as isize
            + margin_px as isize;
        let mut centers = Vec::new();
        for seg in river.points.windows(2) {
            let (x0, y0) = grid.to_pixel(seg[0].0, seg[0].1);
            let (x1, y1) = grid.to_pixel(seg[1].0, seg[1].1);
            let steps = (((x1 - x0).abs().max((y1 - y0).abs())) * 4.0)
                .ceil()
                .max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                centers.push((
                    (x0 + t * (x1 - x0)).floor() as isize,
                    (y0 + t * (y1 - y0)).floor() as isize,
                ));
            }
        }
        if river.points.len() == 1 {
            let (x, y) = grid.to_pixel(river.points[0].0, river.points[0].1);
            centers.push((x.floor() as isize, y.floor() as isize));
        }
        centers.sort_unstable();
        centers.dedup();
        let r2 = radius * radius;
        for (cx, cy) in centers {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    if dx * dx + dy * dy > r2 {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < grid.width && (y as usize) < grid.height {
                        mask.data[y as usize * grid.width + x as usize] = 1;
                    }
                }
            }
        }
    }
    mask
}

/// Share of water-bearing buffer pixels (observed, frequency > 0) whose
/// frequency is below the cutoff; `None` when there are none.
pub fn flood_proportion(
    tile: &GeoRaster,
    buffer: &BinaryMask,
    freq_cutoff: f64,
) -> Result<Option<f64>> {
    if tile.width() != buffer.width || tile.height() != buffer.height {
        return Err(Error::Alignment(
            "river buffer does not match tile extent".into(),
        ));
    }
    let mut denom = 0usize;
    let mut low = 0usize;
    for i in 0..tile.data.len() {
        if buffer.data[i] == 0 || tile.nodata[i] || tile.data[i] <= 0.0 {
            continue;
        }
        denom += 1;
        if f64::from(tile.data[i]) < freq_cutoff {
            low += 1;
        }
    }
    Ok((denom > 0).then(|| low as f64 / denom as f64))
}

/// Whether a tile goes to the flood model.
pub fn classify_flood_prone(
    tile: &GeoRaster,
    buffer: &BinaryMask,
    c: &FloodCriterion,
) -> Result<bool> {
    Ok(flood_proportion(tile, buffer, c.freq_cutoff)?.is_some_and(|p| p > c.threshold))
}
