//! Single-band rasters on an equirectangular lon/lat grid, and the
//! `LKRAST1` container format.
//!
//! File layout: magic `LKRAST1\n`, one line of compact JSON header ending in
//! `\n`, `width·height` little-endian `f32` values in row-major order, then
//! the nodata bitmask (`ceil(width·height / 8)` bytes, pixel `i` at bit
//! `i % 8` of byte `i / 8`). Nodata pixels store `0.0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RASTER_MAGIC: &[u8; 8] = b"LKRAST1\n";
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Pixel grid: `origin` is the top-left corner of pixel `(0, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_deg: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_lon + (col as f64 + 0.5) * self.pixel_deg,
            self.origin_lat - (row as f64 + 0.5) * self.pixel_deg,
        )
    }

    /// Lon/lat of pixel corner `(x, y)` (corners run `0..=width`, `0..=height`).
    pub fn corner(&self, x: usize, y: usize) -> (f64, f64) {
        (
            self.origin_lon + x as f64 * self.pixel_deg,
            self.origin_lat - y as f64 * self.pixel_deg,
        )
    }

    /// Fractional pixel coordinates of a lon/lat point.
    pub fn to_pixel(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) / self.pixel_deg,
            (self.origin_lat - lat) / self.pixel_deg,
        )
    }

    /// Area of one pixel in `row`, in km²:
    /// `(R·Δλ)·(R·Δφ)·cos(φ_center)`.
    pub fn pixel_area_km2(&self, row: usize) -> f64 {
        let d = self.pixel_deg.to_radians();
        let (_, lat) = self.pixel_center(0, row);
        EARTH_RADIUS_KM * d * EARTH_RADIUS_KM * d * lat.to_radians().cos()
    }

    pub fn same_grid(&self, other: &GridSpec) -> bool {
        self == other
    }

    /// Sub-grid starting at pixel `(col, row)`.
    pub fn window(&self, col: usize, row: usize, width: usize, height: usize) -> GridSpec {
        let (lon, lat) = self.corner(col, row);
        GridSpec {
            width,
            height,
            origin_lon: lon,
            origin_lat: lat,
            pixel_deg: self.pixel_deg,
        }
    }
}

/// Floating raster with a per-pixel nodata flag.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoRaster {
    pub grid: GridSpec,
    pub data: Vec<f32>,
    pub nodata: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RasterHeader {
    version: u32,
    width: usize,
    height: usize,
    origin_lon: f64,
    origin_lat: f64,
    pixel_deg: f64,
    nodata: String,
    #[serde(default)]
    meta: serde_json::Value,
}

impl GeoRaster {
    pub fn filled(grid: GridSpec, value: f32) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
            nodata: vec![false; grid.len()],
        }
    }

    pub fn from_data(grid: GridSpec, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::dim(
                "raster",
                &[grid.height, grid.width],
                &[data.len()],
            ));
        }
        Ok(Self {
            nodata: vec![false; data.len()],
            grid,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn idx(&self, col: usize, row: usize) -> usize {
        row * self.grid.width + col
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f32> {
        let i = self.idx(col, row);
        (!self.nodata[i]).then_some(self.data[i])
    }

    pub fn set_nodata(&mut self, i: usize) {
        self.nodata[i] = true;
        self.data[i] = 0.0;
    }

    /// Values with nodata replaced by `fill`.
    pub fn values_or(&self, fill: f32) -> Vec<f32> {
        self.data
            .iter()
            .zip(&self.nodata)
            .map(|(&v, &nd)| if nd { fill } else { v })
            .collect()
    }

    /// Copy a `width×height` window starting at `(col, row)`; pixels beyond
    /// the raster edge are zero-valued.
    pub fn crop_padded(&self, col: usize, row: usize, width: usize, height: usize) -> GeoRaster {
        let mut out = GeoRaster::filled(self.grid.window(col, row, width, height), 0.0);
        for r in 0..height {
            let sr = row + r;
            if sr >= self.height() {
                break;
            }
            for c in 0..width {
                let sc = col + c;
                if sc >= self.width() {
                    break;
                }
                let si = self.idx(sc, sr);
                out.data[r * width + c] = self.data[si];
                out.nodata[r * width + c] = self.nodata[si];
            }
        }
        out
    }

    pub fn to_bytes(&self, meta: &serde_json::Value) -> Result<Vec<u8>> {
        let header = RasterHeader {
            version: 1,
            width: self.grid.width,
            height: self.grid.height,
            origin_lon: self.grid.origin_lon,
            origin_lat: self.grid.origin_lat,
            pixel_deg: self.grid.pixel_deg,
            nodata: "bitmask-lsb".into(),
            meta: meta.clone(),
        };
        let n = self.grid.len();
        let mut out = Vec::with_capacity(64 + n * 4 + n / 8 + 1);
        out.extend_from_slice(RASTER_MAGIC);
        serde_json::to_writer(&mut out, &header)?;
        out.push(b'\n');
        for (&v, &nd) in self.data.iter().zip(&self.nodata) {
            let v = if nd { 0.0f32 } else { v };
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; n.div_ceil(8)];
        for (i, &nd) in self.nodata.iter().enumerate() {
            if nd {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        if bytes.len() < RASTER_MAGIC.len() || &bytes[..RASTER_MAGIC.len()] != RASTER_MAGIC {
            return Err(Error::Format("missing LKRAST1 magic".into()));
        }
        let rest = &bytes[RASTER_MAGIC.len()..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated raster header".into()))?;
        let header: RasterHeader = serde_json::from_slice(&rest[..nl])?;
        if header.version != 1 || header.nodata != "bitmask-lsb" {
            return Err(Error::Format(format!(
                "unsupported raster version {} / nodata encoding {}",
                header.version, header.nodata
            )));
        }
        let grid = GridSpec {
            width: header.width,
            height: header.height,
            origin_lon: header.origin_lon,
            origin_lat: header.origin_lat,
            pixel_deg: header.pixel_deg,
        };
        let n = grid.len();
        let body = &rest[nl + 1..];
        if body.len() != n * 4 + n.div_ceil(8) {
            return Err(Error::Format(format!(
                "raster body is {} bytes, expected {}",
                body.len(),
                n * 4 + n.div_ceil(8)
            )));
        }
        let data = body[..n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let bits = &body[n * 4..];
        let nodata = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
        Ok((Self { grid, data, nodata }, header.meta))
    }

    pub fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        std::fs::write(path, self.to_bytes(meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?.0)
    }
}

/// Binary raster (`1` = lake) aligned to a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim("mask", &[height, width], &[data.len()]));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Input("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Threshold a raster at `0.5`; nodata counts as background.
    pub fn from_raster(r: &GeoRaster) -> Self {
        let data = r
            .data
            .iter()
            .zip(&r.nodata)
            .map(|(&v, &nd)| u8::from(!nd && v >= 0.5))
            .collect();
        Self {
            width: r.width(),
            height: r.height(),
            data,
        }
    }

    pub fn to_raster(&self, grid: GridSpec) -> Result<GeoRaster> {
        if grid.width != self.width || grid.height != self.height {
            return Err(Error::Alignment("mask and grid extents differ".into()));
        }
        GeoRaster::from_data(grid, self.data.iter().map(|&v| v as f32).collect())
    }
}
