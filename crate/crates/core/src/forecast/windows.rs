use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::LakeSeries;

/// Per-epoch model inputs, in order: area, precipitation, vapor pressure,
/// temperature.
pub const NUM_FEATURES: usize = 4;

pub type Features = [f64; NUM_FEATURES];

/// Raw features of every epoch that has both an area and climate.
pub fn raw_features(series: &LakeSeries) -> Vec<Option<Features>> {
    series
        .entries
        .iter()
        .map(|e| match (e.area_km2, e.climate) {
            (Some(a), Some(c)) => Some([a, c.pre_mm, c.vap_hpa, c.tmp_c]),
            _ => None,
        })
        .collect()
}

/// Per-feature mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Features,
    pub std: Features,
}

impl FeatureStats {
    /// Statistics over all usable epochs of `series`.
    pub fn fit(series: &[LakeSeries]) -> Result<Self> {
        let rows: Vec<Features> = series.iter().flat_map(raw_features).flatten().collect();
        if rows.is_empty() {
            return Err(Error::Input(
                "no usable epochs to fit feature statistics".into(),
            ));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        let mut std = [0.0; NUM_FEATURES];
        for r in &rows {
            for k in 0..NUM_FEATURES {
                mean[k] += r[k] / n;
            }
        }
        for r in &rows {
            for k in 0..NUM_FEATURES {
                std[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt().max(1e-9);
        }
        Ok(Self { mean, std })
    }

    pub fn standardize(&self, f: &Features) -> Features {
        std::array::from_fn(|k| (f[k] - self.mean[k]) / self.std[k])
    }

    pub fn area_to_std(&self, area: f64) -> f64 {
        (area - self.mean[0]) / self.std[0]
    }

    pub fn area_from_std(&self, z: f64) -> f64 {
        z * self.std[0] + self.mean[0]
    }
}

/// One sliding-window example.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub lake_id: u64,
    /// Epoch of the predicted step.
    pub target_epoch: usize,
    /// `window_len` standardized feature rows.
    pub inputs: Vec<Features>,
    /// Standardized area of the target epoch.
    pub target: f64,
    pub prev_area_km2: f64,
    pub target_area_km2: f64,
}

/// Maximal runs `[start, end)` of consecutive usable epochs.
pub fn usable_runs(series: &LakeSeries) -> Vec<(usize, usize)> {
    let f = raw_features(series);
    let mut runs = Vec::new();
    let mut i = 0;
    while i < f.len() {
        if f[i].is_none() {
            i += 1;
            continue;
        }
        let s = i;
        while i < f.len() && f[i].is_some() {
            i += 1;
        }
        runs.push((s, i));
    }
    runs
}

/// Every window of `window_len` usable epochs followed by a usable target
/// epoch, never crossing a gap: a run of length `L` yields `L − window_len`
/// samples.
pub fn build_windows(
    series: &[LakeSeries],
    window_len: usize,
    stats: &FeatureStats,
) -> Result<Vec<WindowSample>> {
    if window_len == 0 || window_len >= 16 {
        return Err(Error::Config(format!(
            "window_len must be in 1..16, got {window_len}"
        )));
    }
    let mut out = Vec::new();
    for s in series {
        let raw = raw_features(s);
        for (start, end) in usable_runs(s) {
            for t in start + window_len..end {
                let inputs = (t - window_len..t)
                    .map(|e| stats.standardize(&raw[e].expect("run epochs are usable")))
                    .collect();
                let target_area = raw[t].expect("run epochs are usable")[0];
                out.push(WindowSample {
                    lake_id: s.lake_id,
                    target_epoch: t,
                    inputs,
                    target: stats.area_to_std(target_area),
                    prev_area_km2: raw[t - 1].expect("run epochs are usable")[0],
                    target_area_km2: target_area,
                });
            }
        }
    }
    Ok(out)
}
