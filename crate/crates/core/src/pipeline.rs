//! Stage functions chaining the modules: epoch masks to matched features,
//! matched features to series, and series against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{
    river_buffer, tile_and_infer, EpochMask, FloodCriterion, GeoRaster, River, SegModels,
};
use crate::synth::TruthArea;
use crate::vector::{
    assemble_series, extract_contours, filter_rivers, interpolate_gaps, match_features, year_epoch,
    ClimateTable, LakeFeature, LakeSeries, MatchParams, RTreeIndex,
};

/// Route, segment and reassemble one epoch's occurrence raster.
pub fn infer_epoch(
    raster: &GeoRaster,
    epoch: usize,
    models: &SegModels<'_>,
    rivers: &[River],
    criterion: &FloodCriterion,
    tile: usize,
) -> Result<EpochMask> {
    let buffer = river_buffer(&raster.grid, rivers, criterion.buffer_margin_px);
    tile_and_infer(raster, epoch, models, &buffer, criterion, tile)
}

/// Lake polygons of one mask with wide-river features removed.
pub fn vectorize(mask: &EpochMask, rivers: &[River], min_river_width_m: f64) -> Vec<LakeFeature> {
    filter_rivers(extract_contours(mask), rivers, min_river_width_m)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub features: usize,
    pub matched: usize,
    pub discarded: usize,
}

/// Identity matching of features from masks sharing one grid.
pub fn match_all(
    features: Vec<LakeFeature>,
    index: &RTreeIndex,
    grid: &crate::raster::GridSpec,
    params: &MatchParams,
) -> (Vec<LakeFeature>, MatchSummary) {
    let n = features.len();
    let (kept, discarded) = match_features(features, index, grid, params);
    let summary = MatchSummary {
        features: n,
        matched: kept.len(),
        discarded,
    };
    (kept, summary)
}

/// Per-lake series with climate attached and short interior gaps filled.
pub fn build_series(
    matched: &[LakeFeature],
    climate: &ClimateTable,
    max_run: usize,
) -> Vec<LakeSeries> {
    assemble_series(matched, climate)
        .iter()
        .map(|s| interpolate_gaps(s, max_run))
        .collect()
}

/// Agreement of recovered series with ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub lakes: usize,
    pub lakes_recovered: usize,
    pub cells: usize,
    pub cells_within_tolerance: usize,
    pub fraction_within_tolerance: f64,
    pub rel_tolerance: f64,
    pub pixel_tolerance: f64,
    pub mean_abs_rel_error: f64,
}

/// A cell `(lake, epoch)` is recovered when the series value lies within
/// `max(pixel_tol · pixel area, rel_tol · truth)` of the truth. The pixel
/// area is the lake's mean truth pixel area.
pub fn recovery(
    series: &[LakeSeries],
    truth: &[TruthArea],
    rel_tol: f64,
    pixel_tol: f64,
) -> RecoveryReport {
    let by_id: BTreeMap<u64, &LakeSeries> = series.iter().map(|s| (s.lake_id, s)).collect();
    let mut lakes: BTreeMap<u64, bool> = BTreeMap::new();
    let (mut cells, mut ok, mut err_sum) = (0usize, 0usize, 0.0f64);
    for t in truth {
        let rec = lakes.entry(t.lake_id).or_insert(false);
        let Some(e) = year_epoch(t.epoch_year) else {
            continue;
        };
        cells += 1;
        let got = by_id
            .get(&t.lake_id)
            .and_then(|s| s.entries.get(e))
            .and_then(|x| x.area_km2);
        let Some(got) = got else {
            err_sum += 1.0;
            continue;
        };
        *rec = true;
        let px = if t.pixel_count > 0 {
            t.area_km2 / t.pixel_count as f64
        } else {
            0.0
        };
        let tol = (pixel_tol * px).max(rel_tol * t.area_km2);
        if (got - t.area_km2).abs() <= tol {
            ok += 1;
        }
        err_sum += if t.area_km2 > 0.0 {
            (got - t.area_km2).abs() / t.area_km2
        } else {
            1.0
        };
    }
    RecoveryReport {
        lakes: lakes.len(),
        lakes_recovered: lakes.values().filter(|&&r| r).count(),
        cells,
        cells_within_tolerance: ok,
        fraction_within_tolerance: if cells > 0 {
            ok as f64 / cells as f64
        } else {
            0.0
        },
        rel_tolerance: rel_tol,
        pixel_tolerance: pixel_tol,
        mean_abs_rel_error: if cells > 0 {
            err_sum / cells as f64
        } else {
            0.0
        },
    }
}
