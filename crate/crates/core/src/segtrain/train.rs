use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, standardize};
use super::dataset::Sample;
use super::infer::{p_background, prepare_tile, tile_logits, tile_origins};
use super::loss::{tversky_loss, TverskyParams};
use super::metrics::ConfusionCounts;
use crate::error::{Error, Result};
use crate::swin::SwinUnet;
use crate::tensor::{AdamConfig, AdamState, PlateauScheduler, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub decay_factor: f64,
    pub min_lr: f64,
    pub tversky: TverskyParams,
    pub tile_size: usize,
    pub augment: bool,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            lr: 0.005,
            patience: 6,
            decay_factor: 0.33,
            min_lr: 1e-5,
            tversky: TverskyParams::default(),
            tile_size: 512,
            augment: true,
            seed: 0,
        }
    }
}

impl SegTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.tversky.validate()?;
        if self.batch_size == 0 || self.tile_size == 0 {
            return Err(Error::Config(
                "batch_size and tile_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(
                "lr must be positive and decay_factor in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub miou: f64,
    pub pa: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_miou: f64,
}

/// Loss, confusion counts and pixel count over a set of samples, each
/// covered by non-overlapping standardized tiles.
pub fn evaluate(
    model: &SwinUnet<f32>,
    samples: &[Sample],
    tile: usize,
    batch: usize,
    tversky: TverskyParams,
) -> Result<(f64, ConfusionCounts)> {
    let mut counts = ConfusionCounts::default();
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    for s in samples {
        let (w, h) = (s.image.width(), s.image.height());
        let origins = tile_origins(w, h, tile);
        let tiles: Vec<Vec<f32>> = origins
            .iter()
            .map(|&(c, r)| prepare_tile(&s.image, c, r, tile))
            .collect();
        let logits = tile_logits(model, &tiles, tile, batch)?;
        for (&(c0, r0), l) in origins.iter().zip(&logits) {
            let p0 = p_background(l);
            let pred = l.argmax_lastdim();
            let mut probs = Vec::new();
            let mut labels = Vec::new();
            for r in 0..tile.min(h - r0) {
                for c in 0..tile.min(w - c0) {
                    let i = r * tile + c;
                    let truth = s.label.get(c0 + c, r0 + r);
                    counts.record(pred[i] == 1, truth);
                    probs.push(p0[i]);
                    labels.push(u8::from(truth));
                }
            }
            loss_sum += tversky_value(&probs, &labels, tversky);
            loss_n += 1;
        }
    }
    Ok((loss_sum / loss_n.max(1) as f64, counts))
}

/// Plain evaluation of `1 − T` from background probabilities.
pub fn tversky_value(p0: &[f64], labels: &[u8], p: TverskyParams) -> f64 {
    let (mut tp, mut missed, mut fpos) = (0.0, 0.0, 0.0);
    for (&q, &l) in p0.iter().zip(labels) {
        let g1 = f64::from(l);
        tp += q * (1.0 - g1);
        missed += q * g1;
        fpos += (1.0 - q) * (1.0 - g1);
    }
    let den = tp + p.alpha * missed + p.beta * fpos;
    if den == 0.0 {
        1.0
    } else {
        1.0 - tp / den
    }
}

fn training_tile(
    s: &Sample,
    cfg: &SegTrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f32>, Vec<u8>)> {
    if cfg.augment || s.image.width() != cfg.tile_size || s.image.height() != cfg.tile_size {
        let a = augment(s, cfg.tile_size, rng)?;
        Ok((a.image.data, a.label.data))
    } else {
        Ok((standardize(&s.image.values_or(0.0)), s.label.data.clone()))
    }
}

/// Mini-batch Adam on the Tversky loss with a plateau schedule on test
/// MIoU. The best-MIoU weights are restored into `model` at the end and,
/// when `checkpoint` is given, written there each time they improve.
pub fn train(
    model: &mut SwinUnet<f32>,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &SegTrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Contract(
            "training needs non-empty train and test sets".into(),
        ));
    }
    let t = cfg.tile_size;
    let cin = model.config.in_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.patience, cfg.decay_factor);
    let mut log = Vec::new();
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut best_params = model.params.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut images = Vec::with_capacity(chunk.len() * t * t);
            let mut labels = Vec::with_capacity(chunk.len() * t * t);
            for &i in chunk {
                let (img, lab) = training_tile(&train_set[i], cfg, &mut rng)?;
                images.extend(img);
                labels.extend(lab);
            }
            let mut g = Tape::bind(&model.params, true);
            let x = g.constant(Tensor::new(vec![chunk.len(), t, t, cin], images)?);
            let logits = model.forward(&mut g, x)?;
            let probs = g.softmax(logits)?;
            let loss = tversky_loss(&mut g, probs, &labels, cfg.tversky)?;
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
            loss_sum += value;
            batches += 1;
        }
        let (test_loss, counts) = evaluate(model, test_set, t, cfg.batch_size, cfg.tversky)?;
        let miou = counts.miou()?;
        let pa = counts.pixel_accuracy()?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            test_loss,
            miou,
            pa,
            lr: adam.lr(),
        };
        log::info!(
            "epoch {epoch}: train_loss={:.5} test_loss={:.5} miou={:.4} pa={:.4} lr={:.2e}",
            record.train_loss,
            test_loss,
            miou,
            pa,
            record.lr
        );
        log.push(record);
        if miou > best.1 {
            best = (epoch, miou);
            best_params = model.params.clone();
            if let Some(path) = checkpoint {
                model.save(path, serde_json::json!({ "epoch": epoch, "miou": miou }))?;
            }
        }
        let lr = sched.epoch_end(miou);
        adam.set_lr(lr);
        if lr < cfg.min_lr {
            break;
        }
    }
    model.params = best_params;
    Ok(TrainReport {
        log,
        best_epoch: best.0,
        best_miou: best.1,
    })
}

pub fn write_log_csv(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_loss,test_loss,miou,pa,lr")?;
    for r in log {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.test_loss, r.miou, r.pa, r.lr
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_log_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("{}: malformed log line {}", path.display(), n + 1));
        if v.len() != 6 {
            return Err(bad());
        }
        let f = |i: usize| v[i].parse::<f64>().map_err(|_| bad());
        out.push(EpochRecord {
            epoch: v[0].parse().map_err(|_| bad())?,
            train_loss: f(1)?,
            test_loss: f(2)?,
            miou: f(3)?,
            pa: f(4)?,
            lr: f(5)?,
        });
    }
    Ok(out)
}
