use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmLayer;
use super::windows::{FeatureStats, Features, WindowSample, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::nn::{mse, Linear};
use crate::tensor::{checkpoint, AdamConfig, AdamState, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub window_len: usize,
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window_len: 5,
            hidden: 64,
            layers: 2,
            epochs: 60,
            batch_size: 32,
            lr: 0.001,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len >= 16 {
            return Err(Error::Config(format!(
                "window_len must be in 1..16, got {}",
                self.window_len
            )));
        }
        if self.hidden == 0 || self.layers == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "hidden, layers and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Stacked LSTM with a linear head on the last hidden state of the top
/// layer.
#[derive(Clone, Debug)]
pub struct LstmForecaster<T> {
    pub config: ForecastConfig,
    pub params: ParamStore<T>,
    pub layers: Vec<LstmLayer>,
    pub head: Linear,
    pub stats: FeatureStats,
}

impl<T: Real> LstmForecaster<T> {
    pub fn new(config: ForecastConfig, stats: FeatureStats) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { NUM_FEATURES } else { config.hidden };
                LstmLayer::new(
                    &mut params,
                    &mut rng,
                    &format!("lstm{l}"),
                    input,
                    config.hidden,
                )
            })
            .collect();
        let head = Linear::new(&mut params, &mut rng, "head", config.hidden, 1, true);
        Ok(Self {
            config,
            params,
            layers,
            head,
            stats,
        })
    }

    /// `steps[t]` is `[B, 4]`; result `[B, 1]` (standardized area).
    pub fn forward(&self, g: &mut Tape<T>, steps: &[Var]) -> Result<Var> {
        let b = steps
            .first()
            .map(|&s| g.shape(s)[0])
            .ok_or_else(|| Error::Contract("forecast needs at least one time step".into()))?;
        let hidden = self.config.hidden;
        let mut seq = steps.to_vec();
        for layer in &self.layers {
            let mut h = g.constant(Tensor::zeros(vec![b, hidden]));
            let mut c = g.constant(Tensor::zeros(vec![b, hidden]));
            let mut outs = Vec::with_capacity(seq.len());
            for &x in &seq {
                (h, c) = layer.cell(g, x, h, c)?;
                outs.push(h);
            }
            seq = outs;
        }
        let last = *seq.last().expect("non-empty sequence");
        self.head.forward(g, last)
    }

    /// Per-step input tensors for a batch of windows.
    pub fn step_tensors(g: &mut Tape<T>, windows: &[&[Features]]) -> Result<Vec<Var>> {
        let len = windows.first().map_or(0, |w| w.len());
        if windows.iter().any(|w| w.len() != len) {
            return Err(Error::Contract(
                "windows in a batch must share a length".into(),
            ));
        }
        Ok((0..len)
            .map(|t| {
                let data = windows
                    .iter()
                    .flat_map(|w| w[t].iter().map(|&v| T::from_f64_lossy(v)))
                    .collect();
                g.constant(
                    Tensor::new(vec![windows.len(), NUM_FEATURES], data).expect("shape matches"),
                )
            })
            .collect())
    }

    /// Standardized predictions for each window.
    pub fn predict_std(&self, windows: &[&[Features]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(256) {
            let mut g = Tape::bind(&self.params, false);
            let steps = Self::step_tensors(&mut g, chunk)?;
            let y = self.forward(&mut g, &steps)?;
            out.extend(
                g.value(y)
                    .data()
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(f64::NAN)),
            );
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "lstm-forecaster",
            "config": self.config,
            "stats": self.stats,
        });
        checkpoint::save(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let m = checkpoint::read_manifest(&bytes)?;
        if m.meta.get("kind").and_then(|k| k.as_str()) != Some("lstm-forecaster") {
            return Err(Error::Format(format!(
                "{} is not a forecaster checkpoint",
                path.display()
            )));
        }
        let field = |k: &str| {
            m.meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {k}")))
        };
        let config: ForecastConfig = serde_json::from_value(field("config")?)?;
        let stats: FeatureStats = serde_json::from_value(field("stats")?)?;
        let mut model = Self::new(config, stats)?;
        checkpoint::load_into(&bytes, &mut model.params)?;
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

pub fn write_mse_csv(path: &Path, log: &[MseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mse_csv(path: &Path) -> Result<Vec<MseRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Mean squared error in standardized units over a sample set.
pub fn mse_of(model: &LstmForecaster<f32>, samples: &[WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let windows: Vec<&[Features]> = samples.iter().map(|s| s.inputs.as_slice()).collect();
    let pred = model.predict_std(&windows)?;
    Ok(pred
        .iter()
        .zip(samples)
        .map(|(p, s)| (p - s.target).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

/// Adam on the windowed MSE; returns the per-epoch train/test curve.
pub fn train_forecaster(
    model: &mut LstmForecaster<f32>,
    train: &[WindowSample],
    test: &[WindowSample],
) -> Result<Vec<MseRecord>> {
    if train.is_empty() {
        return Err(Error::Input("no training windows".into()));
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&[Features]> =
                chunk.iter().map(|&i| train[i].inputs.as_slice()).collect();
            let mut g = Tape::bind(&model.params, true);
            let steps = LstmForecaster::step_tensors(&mut g, &windows)?;
            let y = model.forward(&mut g, &steps)?;
            let target = g.constant(Tensor::new(
                vec![chunk.len(), 1],
                chunk.iter().map(|&i| train[i].target as f32).collect(),
            )?);
            let loss = mse(&mut g, y, target)?;
            let value = f64::from(g.value(loss).data()[0]);
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    value,
                });
            }
            g.backward(loss)?;
            g.accumulate_into(&mut model.params);
            adam.step(&mut model.params)?;
            model.params.zero_grad();
            sum += value * chunk.len() as f64;
        }
        let rec = MseRecord {
            epoch,
            train_mse: sum / train.len() as f64,
            test_mse: mse_of(model, test)?,
        };
        log::info!(
            "epoch {epoch}: train_mse={:.5} test_mse={:.5}",
            rec.train_mse,
            rec.test_mse
        );
        curve.push(rec);
    }
    Ok(curve)
}
