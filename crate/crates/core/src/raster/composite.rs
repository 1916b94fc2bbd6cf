use std::path::Path;

use serde::{Deserialize, Serialize};

use super::georaster::{GeoRaster, GridSpec};
use crate::error::{Error, Result};

pub const MONTHS_PER_EPOCH: usize = 24;
pub const STACK_MANIFEST: &str = "stack.json";

/// Monthly water layers of one two-year epoch: value `1` = water, `0` =
/// non-water, nodata = no observation.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyStack {
    pub epoch: usize,
    pub layers: Vec<GeoRaster>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StackManifest {
    version: u32,
    epoch: usize,
    layers: Vec<String>,
}

impl MonthlyStack {
    pub fn new(epoch: usize, layers: Vec<GeoRaster>) -> Result<Self> {
        let s = Self { epoch, layers };
        s.check()?;
        Ok(s)
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.layers.first().map(|l| l.grid)
    }

    fn check(&self) -> Result<()> {
        if self.layers.len() != MONTHS_PER_EPOCH {
            return Err(Error::Input(format!(
                "monthly stack has {} layers, expected {MONTHS_PER_EPOCH}",
                self.layers.len()
            )));
        }
        let g = self.layers[0].grid;
        if let Some((i, _)) = self
            .layers
            .iter()
            .enumerate()
            .find(|(_, l)| !l.grid.same_grid(&g))
        {
            return Err(Error::Alignment(format!(
                "layer {i} does not share the grid of layer 0"
            )));
        }
        Ok(())
    }

    /// Write `m00.lkr … m23.lkr` and `stack.json` into `dir`.
    pub fn save(&self, dir: &Path, meta: &serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let name = format!("m{i:02}.lkr");
            l.save(&dir.join(&name), meta)?;
            names.push(name);
        }
        let m = StackManifest {
            version: 1,
            epoch: self.epoch,
            layers: names,
        };
        std::fs::write(
            dir.join(STACK_MANIFEST),
            serde_json::to_string_pretty(&m)? + "\n",
        )?;
        Ok(())
    }

    /// Load from a stack directory (or the path of its manifest).
    pub fn load(path: &Path) -> Result<Self> {
        let (dir, manifest) = if path.is_dir() {
            (path.to_path_buf(), path.join(STACK_MANIFEST))
        } else {
            (
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
                path.to_path_buf(),
            )
        };
        let text = std::fs::read_to_string(&manifest)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", manifest.display())))?;
        let m: StackManifest = serde_json::from_str(&text)?;
        if m.version != 1 {
            return Err(Error::Format(format!(
                "unsupported stack version {}",
                m.version
            )));
        }
        let layers = m
            .layers
            .iter()
            .map(|n| GeoRaster::load(&dir.join(n)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(m.epoch, layers)
    }
}

/// Occurrence frequency: water observations over valid observations, nodata
/// where a pixel was never observed.
pub fn composite(stack: &MonthlyStack) -> Result<GeoRaster> {
    stack.check()?;
    let grid = stack.layers[0].grid;
    let n = grid.len();
    let mut water = vec![0u32; n];
    let mut valid = vec![0u32; n];
    for layer in &stack.layers {
        for i in 0..n {
            if !layer.nodata[i] {
                valid[i] += 1;
                if layer.data[i] >= 0.5 {
                    water[i] += 1;
                }
            }
        }
    }
    let mut out = GeoRaster::filled(grid, 0.0);
    for i in 0..n {
        if valid[i] == 0 {
            out.set_nodata(i);
        } else {
            out.data[i] = water[i] as f32 / valid[i] as f32;
        }
    }
    Ok(out)
}
