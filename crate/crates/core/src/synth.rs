//! Synthetic worlds standing in for the satellite and reference corpora.
//!
//! Lakes are rotated ellipses, one per cell of a regular layout, whose size
//! drifts over the 16 epochs. Rivers run along the horizontal cell borders
//! and carry intermittent water; an ocean strip on the east edge sits
//! outside the land polygon. Monthly layers are drawn per pixel with a fixed
//! observation dropout, so composites are noisy but the ground truth is
//! exact.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::raster::{
    apply_land_mask, composite, width_in_pixels, BinaryMask, GeoRaster, GridSpec, LandPolygon,
    MonthlyStack, River, MONTHS_PER_EPOCH, NUM_EPOCHS,
};
use crate::segtrain::Sample;
use crate::vector::geojson::{
    lakes_to_geojson, land_to_geojson, reference_to_geojson, rivers_to_geojson, write_json,
};
use crate::vector::{
    epoch_year, write_climate_csv, Climate, ClimateTable, LakeFeature, LakeSeries, ReferenceLake,
    SeriesEntry, Status,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub lakes: usize,
    /// Edge of the square layout cell holding one lake, in pixels.
    pub cell_px: usize,
    pub ocean_px: usize,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_deg: f64,
    /// Range of the base semi-axes, in pixels.
    pub radius_px: (f64, f64),
    /// Largest linear trend of the size scale over the 16 epochs.
    pub drift: f64,
    /// Standard deviation of the per-epoch scale jitter.
    pub noise: f64,
    /// Probability that a pixel lacks an observation in a month.
    pub dropout: f64,
    /// Monthly water probability inside lakes, river channels and elsewhere.
    pub lake_water: f64,
    pub river_water: f64,
    pub background_water: f64,
    /// One river per interior cell border, top to bottom.
    pub river_widths_m: Vec<f64>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            lakes: 20,
            cell_px: 64,
            ocean_px: 16,
            origin_lon: 10.0,
            origin_lat: 46.0,
            pixel_deg: 0.002,
            radius_px: (7.0, 16.0),
            drift: 0.12,
            noise: 0.02,
            dropout: 0.1,
            lake_water: 0.95,
            river_water: 0.45,
            background_water: 0.01,
            river_widths_m: vec![1500.0, 400.0],
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic world: {m}")));
        if self.lakes == 0 || self.cell_px < 16 {
            return bad("needs at least one lake and cells of at least 16 px");
        }
        let (lo, hi) = self.radius_px;
        let limit = self.cell_px as f64 / 2.0 - 6.0;
        if !(lo > 0.0 && lo <= hi && hi * (1.0 + self.drift + 3.0 * self.noise) + 2.0 < limit) {
            return bad("radius range does not fit the layout cell");
        }
        for p in [
            self.dropout,
            self.lake_water,
            self.river_water,
            self.background_water,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.pixel_deg > 0.0) {
            return bad("pixel_deg must be positive");
        }
        Ok(())
    }

    /// Layout columns and rows for the lake count.
    pub fn layout(&self) -> (usize, usize) {
        let cols = ((self.lakes as f64 * 1.25).sqrt().ceil() as usize).max(1);
        (cols, self.lakes.div_ceil(cols))
    }

    pub fn grid(&self) -> GridSpec {
        let (cols, rows) = self.layout();
        GridSpec {
            width: cols * self.cell_px + self.ocean_px,
            height: rows * self.cell_px,
            origin_lon: self.origin_lon,
            origin_lat: self.origin_lat,
            pixel_deg: self.pixel_deg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthLake {
    pub lake_id: u64,
    /// Center in fractional pixel coordinates.
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
    /// Linear size factor per epoch.
    pub scales: Vec<f64>,
}

impl SynthLake {
    pub fn contains(&self, x: f64, y: f64, epoch: usize) -> bool {
        let s = self.scales[epoch];
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (sin, cos) = self.angle.sin_cos();
        let u = (dx * cos + dy * sin) / (self.semi_axes.0 * s);
        let v = (-dx * sin + dy * cos) / (self.semi_axes.1 * s);
        u * u + v * v <= 1.0
    }

    /// Closed polygon approximation of the outline in lon/lat, counter-clockwise.
    pub fn ring(&self, grid: &GridSpec, epoch: usize, vertices: usize) -> Vec<Point> {
        let s = self.scales[epoch];
        let (sin, cos) = self.angle.sin_cos();
        let mut ring: Vec<Point> = (0..vertices)
            .map(|k| {
                // counter-clockwise in lon/lat is clockwise in pixel rows
                let t = -2.0 * PI * k as f64 / vertices as f64;
                let (u, v) = (
                    self.semi_axes.0 * s * t.cos(),
                    self.semi_axes.1 * s * t.sin(),
                );
                let x = self.center.0 + u * cos - v * sin;
                let y = self.center.1 + u * sin + v * cos;
                (
                    grid.origin_lon + x * grid.pixel_deg,
                    grid.origin_lat - y * grid.pixel_deg,
                )
            })
            .collect();
        ring.push(ring[0]);
        ring
    }
}

/// Ground-truth area of one lake in one epoch, from the rasterized outline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthArea {
    pub lake_id: u64,
    pub epoch_year: i32,
    pub pixel_count: usize,
    pub area_km2: f64,
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub spec: WorldSpec,
    pub grid: GridSpec,
    pub lakes: Vec<SynthLake>,
    pub rivers: Vec<River>,
    pub land: Vec<LandPolygon>,
    pub climate: ClimateTable,
    channel: Vec<bool>,
}

impl SynthWorld {
    pub fn generate(spec: &WorldSpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (cols, rows) = spec.layout();
        let cell = spec.cell_px as f64;
        let jitter = Normal::new(0.0, spec.noise.max(1e-12)).expect("positive sigma");
        let lakes: Vec<SynthLake> = (0..spec.lakes)
            .map(|i| {
                let (cx, cy) = ((i % cols) as f64 + 0.5, (i / cols) as f64 + 0.5);
                let trend = rng.gen_range(-spec.drift..=spec.drift);
                let amp = rng.gen_range(0.0..=spec.drift / 2.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                let scales = (0..NUM_EPOCHS)
                    .map(|e| {
                        let t = e as f64 / (NUM_EPOCHS - 1) as f64;
                        let s = 1.0
                            + trend * (t - 0.5)
                            + amp * (2.0 * PI * e as f64 / 8.0 + phase).sin();
                        s + if spec.noise > 0.0 {
                            jitter
                                .sample(&mut rng)
                                .clamp(-3.0 * spec.noise, 3.0 * spec.noise)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                SynthLake {
                    lake_id: i as u64 + 1,
                    center: (
                        cx * cell + rng.gen_range(-2.0..=2.0),
                        cy * cell + rng.gen_range(-2.0..=2.0),
                    ),
                    semi_axes: (
                        rng.gen_range(spec.radius_px.0..=spec.radius_px.1),
                        rng.gen_range(spec.radius_px.0..=spec.radius_px.1),
                    ),
                    angle: rng.gen_range(0.0..PI),
                    scales,
                }
            })
            .collect();

        let land_w = (cols * spec.cell_px) as f64;
        let rivers: Vec<River> = spec
            .river_widths_m
            .iter()
            .take(rows.saturating_sub(1))
            .enumerate()
            .map(|(k, &width_m)| {
                let y = (k + 1) as f64 * cell;
                let phase = rng.gen_range(0.0..2.0 * PI);
                let n = (land_w / 8.0).ceil() as usize;
                let points = (0..=n)
                    .map(|j| {
                        let x = (j as f64 * 8.0).min(land_w);
                        let yy = y + 1.0 * (x / 40.0 + phase).sin();
                        (
                            grid.origin_lon + x * grid.pixel_deg,
                            grid.origin_lat - yy * grid.pixel_deg,
                        )
                    })
                    .collect();
                River { points, width_m }
            })
            .collect();

        let (lon0, lat0) = grid.corner(0, 0);
        let (lon1, lat1) = grid.corner(cols * spec.cell_px, grid.height);
        let land = vec![vec![vec![
            (lon0, lat1),
            (lon1, lat1),
            (lon1, lat0),
            (lon0, lat0),
            (lon0, lat1),
        ]]];

        let mut climate = ClimateTable::new();
        for lake in &lakes {
            let base_pre = rng.gen_range(500.0..1200.0);
            let base_tmp = rng.gen_range(5.0..15.0);
            for (e, s) in lake.scales.iter().enumerate() {
                let wet = s - 1.0;
                climate.insert(
                    (lake.lake_id, e),
                    Climate {
                        pre_mm: base_pre * (1.0 + 0.8 * wet) + rng.gen_range(-10.0..10.0),
                        tmp_c: base_tmp + 0.03 * e as f64 - 2.0 * wet + rng.gen_range(-0.2..0.2),
                        vap_hpa: 8.0 + 0.4 * base_tmp + 3.0 * wet + rng.gen_range(-0.1..0.1),
                    },
                );
            }
        }

        let channel = channel_pixels(&grid, &rivers);
        Ok(Self {
            spec: spec.clone(),
            grid,
            lakes,
            rivers,
            land,
            climate,
            channel,
        })
    }

    pub fn is_ocean(&self, col: usize) -> bool {
        col >= self.grid.width - self.spec.ocean_px
    }

    /// Per-pixel lake id (0 = none) for `epoch`.
    pub fn truth_labels(&self, epoch: usize) -> Vec<u64> {
        let g = &self.grid;
        let mut out = vec![0u64; g.len()];
        let cell = self.spec.cell_px as f64;
        for lake in &self.lakes {
            let reach = lake.semi_axes.0.max(lake.semi_axes.1) * lake.scales[epoch] + 1.0;
            let (c0, c1) = span(lake.center.0, reach, g.width);
            let (r0, r1) = span(lake.center.1, reach, g.height);
            debug_assert!(reach < cell / 2.0 + 2.0);
            for r in r0..r1 {
                for c in c0..c1 {
                    if lake.contains(c as f64 + 0.5, r as f64 + 0.5, epoch) {
                        out[r * g.width + c] = lake.lake_id;
                    }
                }
            }
        }
        out
    }

    pub fn truth_mask(&self, epoch: usize) -> BinaryMask {
        BinaryMask {
            width: self.grid.width,
            height: self.grid.height,
            data: self
                .truth_labels(epoch)
                .iter()
                .map(|&l| u8::from(l > 0))
                .collect(),
        }
    }

    pub fn truth_areas(&self) -> Vec<TruthArea> {
        let mut out = Vec::with_capacity(self.lakes.len() * NUM_EPOCHS);
        for e in 0..NUM_EPOCHS {
            let labels = self.truth_labels(e);
            let mut acc = vec![(0usize, 0.0f64); self.lakes.len()];
            for (i, &l) in labels.iter().enumerate() {
                if l > 0 {
                    let a = &mut acc[l as usize - 1];
                    a.0 += 1;
                    a.1 += self.grid.pixel_area_km2(i / self.grid.width);
                }
            }
            for (lake, (n, area)) in self.lakes.iter().zip(acc) {
                out.push(TruthArea {
                    lake_id: lake.lake_id,
                    epoch_year: epoch_year(e),
                    pixel_count: n,
                    area_km2: area,
                });
            }
        }
        out.sort_by_key(|t| (t.lake_id, t.epoch_year));
        out
    }

    /// Outline polygons of every lake and epoch.
    pub fn truth_features(&self) -> Vec<LakeFeature> {
        let areas = self.truth_areas();
        let mut out = Vec::new();
        for lake in &self.lakes {
            for e in 0..NUM_EPOCHS {
                let t = areas
                    .iter()
                    .find(|t| t.lake_id == lake.lake_id && t.epoch_year == epoch_year(e))
                    .expect("every lake has every epoch");
                out.push(LakeFeature {
                    epoch: e,
                    ring: lake.ring(&self.grid, e, 64),
                    pixel_count: t.pixel_count,
                    area_km2: t.area_km2,
                    lake_id: Some(lake.lake_id),
                });
            }
        }
        out
    }

    /// Reference database: each lake's outline at its base size.
    pub fn reference_lakes(&self) -> Vec<ReferenceLake> {
        self.lakes
            .iter()
            .map(|l| {
                let base = SynthLake {
                    scales: vec![1.0; NUM_EPOCHS],
                    ..l.clone()
                };
                let km_per_px = crate::raster::EARTH_RADIUS_KM * self.grid.pixel_deg.to_radians();
                let (_, lat) = self.grid.pixel_center(0, l.center.1 as usize);
                ReferenceLake {
                    lake_id: l.lake_id,
                    polygon: vec![base.ring(&self.grid, 0, 64)],
                    area_km2: PI
                        * l.semi_axes.0
                        * l.semi_axes.1
                        * km_per_px
                        * km_per_px
                        * lat.to_radians().cos(),
                }
            })
            .collect()
    }

    /// The noiseless monthly water probability of every pixel.
    fn water_probability(&self, epoch: usize) -> Vec<f64> {
        let labels = self.truth_labels(epoch);
        let s = &self.spec;
        (0..self.grid.len())
            .map(|i| {
                if self.is_ocean(i % self.grid.width) {
                    1.0
                } else if labels[i] > 0 {
                    s.lake_water
                } else if self.channel[i] {
                    s.river_water
                } else {
                    s.background_water
                }
            })
            .collect()
    }

    /// 24 monthly layers of `epoch`: 1 water, 0 dry, nodata unobserved.
    pub fn monthly_stack(&self, epoch: usize) -> Result<MonthlyStack> {
        let prob = self.water_probability(epoch);
        let layers = (0..MONTHS_PER_EPOCH)
            .into_par_iter()
            .map(|m| {
                let stream = self.spec.seed
                    ^ ((epoch as u64) << 32 | m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                let mut layer = GeoRaster::filled(self.grid, 0.0);
                for (i, &p) in prob.iter().enumerate() {
                    let observed = !rng.gen_bool(self.spec.dropout);
                    let wet = rng.gen_bool(p);
                    if !observed {
                        layer.set_nodata(i);
                    } else if wet {
                        layer.data[i] = 1.0;
                    }
                }
                layer
            })
            .collect();
        MonthlyStack::new(epoch, layers)
    }

    /// Land-masked occurrence composite of `epoch`.
    pub fn occurrence(&self, epoch: usize) -> Result<GeoRaster> {
        apply_land_mask(&composite(&self.monthly_stack(epoch)?)?, &self.land)
    }

    /// Write stacks, vectors, truth and climate under `dir`.
    pub fn save(&self, dir: &Path, meta: &serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for e in 0..NUM_EPOCHS {
            self.monthly_stack(e)?
                .save(&dir.join("stacks").join(format!("e{e:02}")), meta)?;
        }
        write_json(
            &dir.join("rivers.geojson"),
            &rivers_to_geojson(&self.rivers),
        )?;
        write_json(&dir.join("land.geojson"), &land_to_geojson(&self.land))?;
        write_json(
            &dir.join("reference.geojson"),
            &reference_to_geojson(&self.reference_lakes()),
        )?;
        write_json(
            &dir.join("truth_lakes.geojson"),
            &lakes_to_geojson(&self.truth_features(), meta),
        )?;
        write_truth_csv(&dir.join("truth_areas.csv"), &self.truth_areas())?;
        write_climate_csv(&dir.join("climate.csv"), &self.climate)?;
        Ok(())
    }
}

fn span(center: f64, reach: f64, extent: usize) -> (usize, usize) {
    let lo = (center - reach).floor().max(0.0) as usize;
    let hi = ((center + reach).ceil().max(0.0) as usize).min(extent);
    (lo.min(extent), hi)
}

fn channel_pixels(grid: &GridSpec, rivers: &[River]) -> Vec<bool> {
    let mut out = vec![false; grid.len()];
    for river in rivers {
        let half = width_in_pixels(grid, river.width_m) / 2.0;
        let pts: Vec<(f64, f64)> = river
            .points
            .iter()
            .map(|&(x, y)| grid.to_pixel(x, y))
            .collect();
        for r in 0..grid.height {
            for c in 0..grid.width {
                let p = (c as f64 + 0.5, r as f64 + 0.5);
                if pts
                    .windows(2)
                    .any(|s| segment_distance(p, s[0], s[1]) <= half)
                {
                    out[r * grid.width + c] = true;
                }
            }
        }
    }
    out
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

pub fn write_truth_csv(path: &Path, rows: &[TruthArea]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthArea>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Training tiles cut at random offsets from random epochs of `world`,
/// labelled with the exact lake mask. Tiles overhanging the east edge are
/// zero-padded like inference tiles.
pub fn training_samples(
    world: &SynthWorld,
    count: usize,
    tile: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = world.grid;
    if tile > g.width || tile > g.height {
        return Err(Error::Config(format!(
            "tile {tile} exceeds the {}x{} world",
            g.width, g.height
        )));
    }
    let picks: Vec<(usize, usize, usize)> = (0..count)
        .map(|_| {
            (
                rng.gen_range(0..NUM_EPOCHS),
                rng.gen_range(0..=g.width - tile / 2),
                rng.gen_range(0..=g.height - tile),
            )
        })
        .collect();
    let mut epochs: Vec<usize> = picks.iter().map(|p| p.0).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let rasters: Vec<(usize, GeoRaster, BinaryMask)> = epochs
        .par_iter()
        .map(|&e| Ok((e, world.occurrence(e)?, world.truth_mask(e))))
        .collect::<Result<_>>()?;
    picks
        .into_iter()
        .map(|(e, col, row)| {
            let (_, occ, truth) = rasters.iter().find(|r| r.0 == e).expect("epoch composited");
            let image = occ.crop_padded(col, row, tile, tile);
            let mut label = vec![0u8; tile * tile];
            for r in 0..tile {
                for c in 0..tile {
                    if col + c < g.width {
                        label[r * tile + c] = truth.data[(row + r) * g.width + col + c];
                    }
                }
            }
            let near_river = world.rivers.iter().any(|rv| {
                rv.points.iter().any(|&(x, y)| {
                    let (px, py) = g.to_pixel(x, y);
                    px >= col as f64
                        && px < (col + tile) as f64
                        && py >= row as f64
                        && py < (row + tile) as f64
                })
            });
            Sample::new(image, BinaryMask::new(tile, tile, label)?, near_river)
        })
        .collect()
}

/// Noiseless sinusoid-plus-trend area series with matching climate, for
/// checking that the forecaster can learn a smooth signal.
pub fn sinusoid_series(lakes: usize, seed: u64) -> Vec<LakeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..lakes)
        .map(|i| {
            let base = rng.gen_range(5.0..50.0);
            let amp = rng.gen_range(0.05..0.2) * base;
            let trend = rng.gen_range(-0.01..0.01) * base;
            let phase = rng.gen_range(0.0..2.0 * PI);
            let entries = (0..NUM_EPOCHS)
                .map(|e| {
                    let s = (2.0 * PI * e as f64 / 8.0 + phase).sin();
                    SeriesEntry {
                        area_km2: Some(base + amp * s + trend * e as f64),
                        status: Status::Observed,
                        climate: Some(Climate {
                            pre_mm: 800.0 + 150.0 * s,
                            tmp_c: 10.0 - 1.5 * s,
                            vap_hpa: 12.0 + 2.0 * s,
                        }),
                    }
                })
                .collect();
            LakeSeries {
                lake_id: i as u64 + 1,
                entries,
            }
        })
        .collect()
}
