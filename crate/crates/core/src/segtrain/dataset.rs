use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GeoRaster};

/// File name of a dataset manifest inside its directory.
pub const DATASET_MANIFEST: &str = "dataset.json";

/// One training tile: occurrence image, lake label and flood flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: GeoRaster,
    pub label: BinaryMask,
    pub flood: bool,
}

impl Sample {
    pub fn new(image: GeoRaster, label: BinaryMask, flood: bool) -> Result<Self> {
        if image.width() != label.width || image.height() != label.height {
            return Err(Error::dim(
                "sample",
                &[image.height(), image.width()],
                &[label.height, label.width],
            ));
        }
        if label.data.iter().any(|&v| v > 1) {
            return Err(Error::Input("label values must be 0 or 1".into()));
        }
        Ok(Self {
            image,
            label,
            flood,
        })
    }
}

/// Shuffle under `rng` and split into `⌊fraction·n⌋` training items and the
/// rest.
pub fn split_dataset<S, R: Rng>(
    mut items: Vec<S>,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<S>, Vec<S>)> {
    if items.len() < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 samples to split, got {}",
            items.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    items.shuffle(rng);
    let n_train = ((fraction * items.len() as f64) + 1e-9).floor() as usize;
    let n_train = n_train.clamp(1, items.len() - 1);
    let test = items.split_off(n_train);
    Ok((items, test))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image: String,
    pub label: String,
    pub flood: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<SampleEntry>,
}

/// Write samples as raster pairs plus a `dataset.json` manifest.
pub fn save_dataset(dir: &Path, samples: &[Sample], meta: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = DatasetManifest::default();
    for (i, s) in samples.iter().enumerate() {
        let image = format!("tile_{i:04}.lkr");
        let label = format!("tile_{i:04}_label.lkr");
        s.image.save(&dir.join(&image), meta)?;
        s.label
            .to_raster(s.image.grid)?
            .save(&dir.join(&label), meta)?;
        manifest.samples.push(SampleEntry {
            image,
            label,
            flood: s.flood,
        });
    }
    std::fs::write(
        dir.join(DATASET_MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let path: PathBuf = dir.join(DATASET_MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest
        .samples
        .iter()
        .map(|e| {
            let image = GeoRaster::load(&dir.join(&e.image))?;
            let label = BinaryMask::from_raster(&GeoRaster::load(&dir.join(&e.label))?);
            Sample::new(image, label, e.flood)
        })
        .collect()
}
