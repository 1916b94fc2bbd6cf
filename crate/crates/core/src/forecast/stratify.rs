use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::vector::LakeSeries;

pub const AREA_MIN_KM2: f64 = 1.0;
pub const AREA_MAX_KM2: f64 = 60.0;
pub const NUM_BINS: usize = 10;

/// Mean area over the non-missing epochs.
pub fn mean_area(s: &LakeSeries) -> Option<f64> {
    let v: Vec<f64> = s.entries.iter().filter_map(|e| e.area_km2).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Lakes whose mean area lies in `[1, 60]` km².
pub fn within_area_range(series: &[LakeSeries]) -> Vec<LakeSeries> {
    series
        .iter()
        .filter(|s| mean_area(s).is_some_and(|a| (AREA_MIN_KM2..=AREA_MAX_KM2).contains(&a)))
        .cloned()
        .collect()
}

/// Equal-width bins over `[1, 60]` km² of multi-year mean area, holding
/// lake ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Stratification {
    pub edges: Vec<f64>,
    pub bins: Vec<Vec<u64>>,
}

pub fn bin_of(area: f64) -> usize {
    let w = (AREA_MAX_KM2 - AREA_MIN_KM2) / NUM_BINS as f64;
    (((area - AREA_MIN_KM2) / w).floor().max(0.0) as usize).min(NUM_BINS - 1)
}

impl Stratification {
    pub fn new(series: &[LakeSeries]) -> Result<Self> {
        let w = (AREA_MAX_KM2 - AREA_MIN_KM2) / NUM_BINS as f64;
        let edges = (0..=NUM_BINS)
            .map(|k| AREA_MIN_KM2 + k as f64 * w)
            .collect();
        let mut bins = vec![Vec::new(); NUM_BINS];
        for s in series {
            let a = mean_area(s)
                .ok_or_else(|| Error::Input(format!("lake {} has no observed area", s.lake_id)))?;
            if !(AREA_MIN_KM2..=AREA_MAX_KM2).contains(&a) {
                return Err(Error::Input(format!(
                    "lake {} mean area {a} km² outside [{AREA_MIN_KM2}, {AREA_MAX_KM2}]",
                    s.lake_id
                )));
            }
            bins[bin_of(a)].push(s.lake_id);
        }
        for b in &mut bins {
            b.sort_unstable();
        }
        Ok(Self { edges, bins })
    }
}

/// Per-bin shuffle and split: `⌊(1 − fraction)·n⌋` lakes of each bin go to
/// test, the rest to train. Returns `(train_ids, test_ids)`, each sorted.
pub fn stratified_split<R: Rng>(
    strat: &Stratification,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<u64>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} outside (0, 1]"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, bin) in strat.bins.iter().enumerate() {
        if bin.is_empty() {
            log::warn!(
                "area bin {k} [{:.1}, {:.1}) km² is empty",
                strat.edges[k],
                strat.edges[k + 1]
            );
            continue;
        }
        let mut ids = bin.clone();
        ids.shuffle(rng);
        let n_test = ((1.0 - fraction) * ids.len() as f64 + 1e-9).floor() as usize;
        test.extend_from_slice(&ids[..n_test]);
        train.extend_from_slice(&ids[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
