use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contour::{epoch_year, year_epoch, LakeFeature};
use crate::error::{Error, Result};
use crate::raster::NUM_EPOCHS;

/// Longest interior gap filled by interpolation.
pub const MAX_INTERPOLATED_RUN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Observed,
    Interpolated,
    Missing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Climate {
    pub pre_mm: f64,
    pub tmp_c: f64,
    pub vap_hpa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesEntry {
    pub area_km2: Option<f64>,
    pub status: Status,
    pub climate: Option<Climate>,
}

impl SeriesEntry {
    pub const MISSING: SeriesEntry = SeriesEntry {
        area_km2: None,
        status: Status::Missing,
        climate: None,
    };
}

/// Biennial record of one lake.
#[derive(Clone, Debug, PartialEq)]
pub struct LakeSeries {
    pub lake_id: u64,
    pub entries: Vec<SeriesEntry>,
}

/// Climate covariates keyed by `(lake_id, epoch)`.
pub type ClimateTable = BTreeMap<(u64, usize), Climate>;

/// Group matched features by id; same-epoch matches are summed.
pub fn assemble_series(features: &[LakeFeature], climate: &ClimateTable) -> Vec<LakeSeries> {
    let mut areas: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for f in features {
        let Some(id) = f.lake_id else { continue };
        if f.epoch >= NUM_EPOCHS {
            continue;
        }
        let row = areas.entry(id).or_insert_with(|| vec![None; NUM_EPOCHS]);
        *row[f.epoch].get_or_insert(0.0) += f.area_km2;
    }
    areas
        .into_iter()
        .map(|(lake_id, a)| LakeSeries {
            lake_id,
            entries: a
                .into_iter()
                .enumerate()
                .map(|(e, area)| SeriesEntry {
                    area_km2: area,
                    status: if area.is_some() {
                        Status::Observed
                    } else {
                        Status::Missing
                    },
                    climate: climate.get(&(lake_id, e)).copied(),
                })
                .collect(),
        })
        .collect()
}

/// Fill interior missing runs of at most `max_run` epochs linearly between
/// the flanking values. Leading and trailing gaps stay missing.
pub fn interpolate_gaps(series: &LakeSeries, max_run: usize) -> LakeSeries {
    let mut out = series.clone();
    let e = &mut out.entries;
    let n = e.len();
    let mut i = 0;
    while i < n {
        if e[i].area_km2.is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && e[i].area_km2.is_none() {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == n || len > max_run {
            continue;
        }
        let (a, b) = (
            e[start - 1].area_km2.unwrap_or(0.0),
            e[i].area_km2.unwrap_or(0.0),
        );
        for (k, entry) in e[start..i].iter_mut().enumerate() {
            let t = (k + 1) as f64 / (len + 1) as f64;
            entry.area_km2 = Some(a + t * (b - a));
            entry.status = Status::Interpolated;
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    lake_id: u64,
    epoch_year: i32,
    area_km2: Option<f64>,
    status: Status,
    pre_mm: Option<f64>,
    tmp_c: Option<f64>,
    vap_hpa: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClimateRow {
    lake_id: u64,
    epoch_year: i32,
    pre_mm: f64,
    tmp_c: f64,
    vap_hpa: f64,
}

pub fn write_series_csv(path: &Path, series: &[LakeSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in series {
        for (epoch, e) in s.entries.iter().enumerate() {
            w.serialize(SeriesRow {
                lake_id: s.lake_id,
                epoch_year: epoch_year(epoch),
                area_km2: e.area_km2,
                status: e.status,
                pre_mm: e.climate.map(|c| c.pre_mm),
                tmp_c: e.climate.map(|c| c.tmp_c),
                vap_hpa: e.climate.map(|c| c.vap_hpa),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn epoch_of(year: i32) -> Result<usize> {
    year_epoch(year)
        .filter(|&e| e < NUM_EPOCHS)
        .ok_or_else(|| Error::Input(format!("{year} is not an epoch year")))
}

pub fn read_series_csv(path: &Path) -> Result<Vec<LakeSeries>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut map: BTreeMap<u64, Vec<SeriesEntry>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: SeriesRow = row?;
        let epoch = epoch_of(row.epoch_year)?;
        let climate = match (row.pre_mm, row.tmp_c, row.vap_hpa) {
            (Some(pre_mm), Some(tmp_c), Some(vap_hpa)) => Some(Climate {
                pre_mm,
                tmp_c,
                vap_hpa,
            }),
            _ => None,
        };
        if row.area_km2.is_none() != (row.status == Status::Missing) {
            return Err(Error::Format(format!(
                "lake {} year {}: status {:?} disagrees with area",
                row.lake_id, row.epoch_year, row.status
            )));
        }
        map.entry(row.lake_id)
            .or_insert_with(|| vec![SeriesEntry::MISSING; NUM_EPOCHS])[epoch] = SeriesEntry {
            area_km2: row.area_km2,
            status: row.status,
            climate,
        };
    }
    Ok(map
        .into_iter()
        .map(|(lake_id, entries)| LakeSeries { lake_id, entries })
        .collect())
}

pub fn write_climate_csv(path: &Path, table: &ClimateTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&(lake_id, epoch), c) in table {
        w.serialize(ClimateRow {
            lake_id,
            epoch_year: epoch_year(epoch),
            pre_mm: c.pre_mm,
            tmp_c: c.tmp_c,
            vap_hpa: c.vap_hpa,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_climate_csv(path: &Path) -> Result<ClimateTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut table = ClimateTable::new();
    for row in r.deserialize() {
        let row: ClimateRow = row?;
        table.insert(
            (row.lake_id, epoch_of(row.epoch_year)?),
            Climate {
                pre_mm: row.pre_mm,
                tmp_c: row.tmp_c,
                vap_hpa: row.vap_hpa,
            },
        );
    }
    Ok(table)
}
