use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::LstmForecaster;
use super::windows::{raw_features, Features, WindowSample};
use crate::error::Result;
use crate::raster::NUM_EPOCHS;
use crate::vector::{epoch_year, LakeSeries};

/// One-step-ahead forecast of a lake's area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub lake_id: u64,
    pub year: i32,
    pub predicted_area_km2: f64,
    pub prev_area_km2: f64,
    pub truth_area_km2: Option<f64>,
}

impl Prediction {
    /// `|predicted − truth| / previous`, when the truth is known.
    pub fn rel_error(&self) -> Option<f64> {
        self.truth_area_km2
            .map(|t| (self.predicted_area_km2 - t).abs() / self.prev_area_km2)
    }
}

/// Forecast for the epoch after the record ends, from the trailing window.
pub fn predict_next(
    model: &LstmForecaster<f32>,
    series: &LakeSeries,
) -> std::result::Result<Prediction, String> {
    let w = model.config.window_len;
    let raw = raw_features(series);
    let n = raw.len();
    if n < w {
        return Err(format!(
            "lake {}: only {n} epochs, window needs {w}",
            series.lake_id
        ));
    }
    let tail: Option<Vec<Features>> = raw[n - w..].iter().copied().collect();
    let Some(tail) = tail else {
        return Err(format!(
            "lake {}: fewer than {w} trailing epochs with area and climate",
            series.lake_id
        ));
    };
    let inputs: Vec<Features> = tail.iter().map(|f| model.stats.standardize(f)).collect();
    let z = model
        .predict_std(&[inputs.as_slice()])
        .map_err(|e| format!("lake {}: {e}", series.lake_id))?[0];
    Ok(Prediction {
        lake_id: series.lake_id,
        year: epoch_year(NUM_EPOCHS.max(n)),
        predicted_area_km2: model.stats.area_from_std(z),
        prev_area_km2: tail[w - 1][0],
        truth_area_km2: None,
    })
}

/// One-step predictions at every window, with known truth.
pub fn hindcast(model: &LstmForecaster<f32>, samples: &[WindowSample]) -> Result<Vec<Prediction>> {
    let windows: Vec<&[Features]> = samples.iter().map(|s| s.inputs.as_slice()).collect();
    let z = model.predict_std(&windows)?;
    Ok(samples
        .iter()
        .zip(z)
        .map(|(s, z)| Prediction {
            lake_id: s.lake_id,
            year: epoch_year(s.target_epoch),
            predicted_area_km2: model.stats.area_from_std(z),
            prev_area_km2: s.prev_area_km2,
            truth_area_km2: Some(s.target_area_km2),
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    lake_id: u64,
    year: i32,
    predicted_area_km2: f64,
    prev_area_km2: f64,
    truth_area_km2: Option<f64>,
    rel_error_if_known: Option<f64>,
}

pub fn write_predictions_csv(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in preds {
        w.serialize(PredictionRow {
            lake_id: p.lake_id,
            year: p.year,
            predicted_area_km2: p.predicted_area_km2,
            prev_area_km2: p.prev_area_km2,
            truth_area_km2: p.truth_area_km2,
            rel_error_if_known: p.rel_error(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| {
            let row: PredictionRow = row?;
            Ok(Prediction {
                lake_id: row.lake_id,
                year: row.year,
                predicted_area_km2: row.predicted_area_km2,
                prev_area_km2: row.prev_area_km2,
                truth_area_km2: row.truth_area_km2,
            })
        })
        .collect()
}
