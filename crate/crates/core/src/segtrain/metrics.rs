use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel confusion counts with lake as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::dim("confusion", &[pred.len()], &[truth.len()]));
        }
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            c.record(p != 0, t != 0);
        }
        Ok(c)
    }

    pub fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn nonempty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::Contract("metrics over zero scored pixels".into())),
            n => Ok(n as f64),
        }
    }

    /// `(TP + TN) / total`.
    pub fn pixel_accuracy(&self) -> Result<f64> {
        let n = self.nonempty()?;
        Ok((self.tp + self.tn) as f64 / n)
    }

    /// Mean of the lake and non-lake IoU. A class absent from both the
    /// prediction and the truth scores 1.
    pub fn miou(&self) -> Result<f64> {
        self.nonempty()?;
        let iou = |hit: u64| {
            let den = hit + self.fp + self.fn_;
            if den == 0 {
                1.0
            } else {
                hit as f64 / den as f64
            }
        };
        Ok(0.5 * (iou(self.tp) + iou(self.tn)))
    }
}
