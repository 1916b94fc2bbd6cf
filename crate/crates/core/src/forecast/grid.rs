//! Aggregation of per-lake values onto 0.5° × 0.5° cells.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CELL_DEG: f64 = 0.5;

/// Cell holding `(lon, lat)`: half-open `[k/2, k/2 + 0.5)` on both axes.
pub fn cell_index(lon: f64, lat: f64) -> (i64, i64) {
    (
        (lon / CELL_DEG).floor() as i64,
        (lat / CELL_DEG).floor() as i64,
    )
}

/// `(lon_min, lat_min)` of a cell.
pub fn cell_origin((ix, iy): (i64, i64)) -> (f64, f64) {
    (ix as f64 * CELL_DEG, iy as f64 * CELL_DEG)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub count: usize,
    pub sum: f64,
}

impl CellStat {
    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }
}

pub type GridTable = BTreeMap<(i64, i64), CellStat>;

pub fn aggregate(records: impl IntoIterator<Item = (f64, f64, f64)>) -> GridTable {
    let mut t = GridTable::new();
    for (lon, lat, v) in records {
        let c = t.entry(cell_index(lon, lat)).or_default();
        c.count += 1;
        c.sum += v;
    }
    t
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    lon_min: f64,
    lat_min: f64,
    count: usize,
    mean: f64,
}

pub fn write_grid_csv(path: &Path, t: &GridTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&k, c) in t {
        let (lon_min, lat_min) = cell_origin(k);
        w.serialize(GridRow {
            lon_min,
            lat_min,
            count: c.count,
            mean: c.mean(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<GridTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut t = GridTable::new();
    for row in r.deserialize() {
        let row: GridRow = row?;
        t.insert(
            cell_index(row.lon_min + 1e-9, row.lat_min + 1e-9),
            CellStat {
                count: row.count,
                sum: row.mean * row.count as f64,
            },
        );
    }
    Ok(t)
}
