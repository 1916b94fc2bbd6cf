use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use lakewatch::config::RunConfig;
use lakewatch::forecast::{
    aggregate, build_windows, hindcast, predict_next, read_grid_csv, read_mse_csv,
    read_predictions_csv, stratified_split, train_forecaster, within_area_range, write_grid_csv,
    write_mse_csv, write_predictions_csv, FeatureStats, LstmForecaster, Stratification,
};
use lakewatch::geom::Point;
use lakewatch::pipeline::{build_series, infer_epoch, match_all, recovery, vectorize};
use lakewatch::plot::{self, GridValue};
use lakewatch::raster::{
    apply_land_mask, composite, EpochMask, GeoRaster, GridSpec, MonthlyStack, SegModels,
    STACK_MANIFEST,
};
use lakewatch::segtrain::{
    load_dataset, read_log_csv, save_dataset, split_dataset, train, write_log_csv,
};
use lakewatch::swin::SwinUnet;
use lakewatch::synth::{read_truth_csv, training_samples, SynthWorld, WorldSpec};
use lakewatch::vector::geojson::{
    lakes_from_geojson, lakes_to_geojson, land_from_geojson, read_json, reference_from_geojson,
    rivers_from_geojson, write_json,
};
use lakewatch::vector::{
    read_climate_csv, read_series_csv, write_series_csv, LakeFeature, LakeSeries, RTreeIndex,
};
use lakewatch::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{require, Command, PlotKind, Subset};

/// Provenance written next to every CSV output as `<file>.meta.json`.
fn sidecar(path: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    let inputs: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    write_json(
        Path::new(&name),
        &json!({ "command": command, "config": cfg.echo(), "inputs": inputs }),
    )
}

fn meta(command: &str, cfg: &RunConfig) -> Value {
    json!({ "command": command, "config": cfg.echo() })
}

fn distinct(input: &Path, out: &Path) -> Result<()> {
    if input == out {
        return Err(Error::Config(format!(
            "output {} would overwrite its input",
            out.display()
        )));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

/// Files in `dir` named `<prefix>NN.lkr`, sorted by name.
fn epoch_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    require(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".lkr"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!(
            "no {prefix}*.lkr files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn grid_of(doc: &Value) -> Result<GridSpec> {
    let g = doc
        .get("grid")
        .ok_or_else(|| Error::Input("lake collection carries no grid".into()))?;
    Ok(serde_json::from_value(g.clone())?)
}

fn read_lakes(path: &Path) -> Result<(Vec<LakeFeature>, Value)> {
    require(path)?;
    let doc = read_json(path)?;
    Ok((lakes_from_geojson(&doc)?, doc))
}

fn centroid(ring: &[Point]) -> Point {
    let n = ring.len().saturating_sub(1).max(1);
    let (sx, sy) = ring[..n]
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    (sx / n as f64, sy / n as f64)
}

/// One location per lake id: the centroid of its earliest-epoch polygon.
fn lake_locations(features: &[LakeFeature]) -> BTreeMap<u64, Point> {
    let mut out: BTreeMap<u64, (usize, Point)> = BTreeMap::new();
    for f in features {
        if let Some(id) = f.lake_id {
            let c = centroid(&f.ring);
            out.entry(id)
                .and_modify(|e| {
                    if f.epoch < e.0 {
                        *e = (f.epoch, c);
                    }
                })
                .or_insert((f.epoch, c));
        }
    }
    out.into_iter().map(|(k, v)| (k, v.1)).collect()
}

pub fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth {
            lakes,
            train_tiles,
            out,
        } => synth(cfg, *lakes, *train_tiles, out),
        Command::Composite { input, land, out } => {
            let input = input
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.raster_dir).join("stacks"));
            let out = out
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.raster_dir).join("occurrence"));
            composite_cmd(cfg, &input, land.as_deref(), &out)
        }
        Command::TrainSeg { input, subset, out } => {
            let out = out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.checkpoint_dir));
            train_seg(cfg, input, *subset, &out)
        }
        Command::Infer {
            input,
            rivers,
            model,
            flood_model,
            out,
        } => {
            let input = input
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.raster_dir).join("occurrence"));
            let rivers = rivers
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.vector_dir).join("rivers.geojson"));
            let out = out
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.output_dir).join("masks"));
            infer(cfg, &input, &rivers, model, flood_model.as_deref(), &out)
        }
        Command::Vectorize { input, rivers, out } => {
            let rivers = rivers
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.vector_dir).join("rivers.geojson"));
            vectorize_cmd(cfg, input, &rivers, out)
        }
        Command::Match {
            input,
            reference,
            out,
        } => {
            let reference = reference
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.vector_dir).join("reference.geojson"));
            match_cmd(cfg, input, &reference, out)
        }
        Command::Interpolate {
            input,
            climate,
            out,
        } => {
            let climate = climate
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.climate_csv));
            interpolate(cfg, input, &climate, out)
        }
        Command::TrainForecast { input, out } => {
            let out = out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.checkpoint_dir));
            train_forecast(cfg, input, &out)
        }
        Command::Predict {
            input,
            model,
            split,
            out,
        } => predict(cfg, input, model, split.as_deref(), out),
        Command::Eval {
            input,
            truth,
            lakes,
            predictions,
            out,
        } => eval(
            cfg,
            input,
            truth.as_deref(),
            lakes.as_deref(),
            predictions.as_deref(),
            out,
        ),
        Command::Plot { kind, input, out } => plot_cmd(*kind, input, out),
    }
}

fn synth(cfg: &RunConfig, lakes: usize, train_tiles: usize, out: &Path) -> Result<()> {
    let spec = WorldSpec {
        seed: cfg.seed,
        lakes,
        ..WorldSpec::default()
    };
    let world = SynthWorld::generate(&spec)?;
    let m = json!({ "command": "synth", "config": cfg.echo(), "world": spec });
    world.save(out, &m)?;
    sidecar(&out.join("truth_areas.csv"), "synth", cfg, &[])?;
    sidecar(&out.join("climate.csv"), "synth", cfg, &[])?;
    write_json(&out.join("world.json"), &m)?;
    if train_tiles > 0 {
        let tile = cfg.tile_size;
        if tile > world.grid.width || tile > world.grid.height {
            log::warn!(
                "tile_size {tile} exceeds the {}x{} world; no training tiles written",
                world.grid.width,
                world.grid.height
            );
        } else {
            // training tiles come from a sibling world with the same parameters
            let sibling = SynthWorld::generate(&WorldSpec {
                seed: cfg.seed.wrapping_add(1),
                ..spec
            })?;
            let samples = training_samples(&sibling, train_tiles, tile, cfg.seed.wrapping_add(2))?;
            save_dataset(&out.join("train"), &samples, &m)?;
        }
    }
    log::info!(
        "synthetic world with {lakes} lakes written to {}",
        out.display()
    );
    Ok(())
}

fn composite_cmd(cfg: &RunConfig, input: &Path, land: Option<&Path>, out: &Path) -> Result<()> {
    require(input)?;
    distinct(input, out)?;
    let land = match land {
        Some(p) => {
            require(p)?;
            Some(land_from_geojson(&read_json(p)?)?)
        }
        None => None,
    };
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(STACK_MANIFEST).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Input(format!(
            "no monthly stacks under {}",
            input.display()
        )));
    }
    std::fs::create_dir_all(out)?;
    for dir in dirs {
        let stack = MonthlyStack::load(&dir)?;
        let mut occ = composite(&stack)?;
        if let Some(l) = &land {
            occ = apply_land_mask(&occ, l)?;
        }
        let m = json!({ "command": "composite", "config": cfg.echo(), "epoch": stack.epoch });
        occ.save(&out.join(format!("occurrence_e{:02}.lkr", stack.epoch)), &m)?;
        log::info!("composited epoch {}", stack.epoch);
    }
    Ok(())
}

fn train_seg(cfg: &RunConfig, input: &Path, subset: Subset, out: &Path) -> Result<()> {
    require(input)?;
    let samples: Vec<_> = load_dataset(input)?
        .into_iter()
        .filter(|s| match subset {
            Subset::All => true,
            Subset::Flood => s.flood,
            Subset::Nonflood => !s.flood,
        })
        .collect();
    if samples.len() < 2 {
        return Err(Error::Input(format!(
            "{} samples in subset; at least 2 needed",
            samples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (tr, te) = split_dataset(samples, cfg.train_fraction, &mut rng)?;
    let mut model = SwinUnet::<f32>::new(cfg.swin()?, cfg.seed)?;
    std::fs::create_dir_all(out)?;
    let ckpt = out.join("model.lkc");
    let report = train(&mut model, &tr, &te, &cfg.seg_train()?, Some(&ckpt))?;
    let log_path = out.join("train_log.csv");
    write_log_csv(&log_path, &report.log)?;
    sidecar(&log_path, "train-seg", cfg, &[input])?;
    write_json(
        &out.join("report.json"),
        &json!({
            "best_epoch": report.best_epoch,
            "best_miou": report.best_miou,
            "train_samples": tr.len(),
            "test_samples": te.len(),
            "subset": format!("{subset:?}").to_lowercase(),
            "config": cfg.echo(),
        }),
    )
}

fn infer(
    cfg: &RunConfig,
    input: &Path,
    rivers: &Path,
    model: &Path,
    flood_model: Option<&Path>,
    out: &Path,
) -> Result<()> {
    distinct(input, out)?;
    require(model)?;
    require(rivers)?;
    let nonflood = SwinUnet::<f32>::load(model)?;
    let flood = match flood_model {
        Some(p) => {
            require(p)?;
            Some(SwinUnet::<f32>::load(p)?)
        }
        None => None,
    };
    let rivers = rivers_from_geojson(&read_json(rivers)?)?;
    let models = SegModels {
        flood: flood.as_ref().unwrap_or(&nonflood),
        nonflood: &nonflood,
    };
    let tile = nonflood.config.input_size;
    if flood.as_ref().is_some_and(|f| f.config.input_size != tile) {
        return Err(Error::Config(
            "flood and non-flood models use different tile sizes".into(),
        ));
    }
    std::fs::create_dir_all(out)?;
    for path in epoch_files(input, "occurrence_e")? {
        let (raster, m) = GeoRaster::from_bytes(&std::fs::read(&path)?)?;
        let epoch = m
            .get("epoch")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Format(format!("{} has no epoch", path.display())))?
            as usize;
        let mask = infer_epoch(&raster, epoch, &models, &rivers, &cfg.flood(), tile)?;
        mask.save(
            &out.join(format!("mask_e{epoch:02}.lkr")),
            &meta("infer", cfg),
        )?;
        log::info!("epoch {epoch}: {} lake pixels", mask.mask.count());
    }
    Ok(())
}

fn vectorize_cmd(cfg: &RunConfig, input: &Path, rivers: &Path, out: &Path) -> Result<()> {
    require(rivers)?;
    let rivers = rivers_from_geojson(&read_json(rivers)?)?;
    let mut grid: Option<GridSpec> = None;
    let mut features = Vec::new();
    for path in epoch_files(input, "mask_e")? {
        let mask = EpochMask::load(&path)?;
        match grid {
            Some(g) if !g.same_grid(&mask.grid) => {
                return Err(Error::Alignment(format!(
                    "{} is on a different grid",
                    path.display()
                )))
            }
            _ => grid = Some(mask.grid),
        }
        features.extend(vectorize(&mask, &rivers, cfg.min_river_width_m));
    }
    let mut doc = lakes_to_geojson(&features, &cfg.echo());
    doc["grid"] = serde_json::to_value(grid)?;
    parent_dir(out)?;
    write_json(out, &doc)
}

fn match_cmd(cfg: &RunConfig, input: &Path, reference: &Path, out: &Path) -> Result<()> {
    distinct(input, out)?;
    let (features, doc) = read_lakes(input)?;
    let grid = grid_of(&doc)?;
    require(reference)?;
    let index = RTreeIndex::build(reference_from_geojson(&read_json(reference)?)?)?;
    let (kept, summary) = match_all(features, &index, &grid, &cfg.matching());
    log::info!(
        "{} of {} features matched",
        summary.matched,
        summary.features
    );
    let mut doc = lakes_to_geojson(&kept, &cfg.echo());
    doc["grid"] = serde_json::to_value(grid)?;
    doc["match"] = serde_json::to_value(&summary)?;
    parent_dir(out)?;
    write_json(out, &doc)
}

fn interpolate(cfg: &RunConfig, input: &Path, climate: &Path, out: &Path) -> Result<()> {
    let (features, _) = read_lakes(input)?;
    require(climate)?;
    let table = read_climate_csv(climate)?;
    let series = build_series(&features, &table, cfg.max_interp_run);
    parent_dir(out)?;
    write_series_csv(out, &series)?;
    sidecar(out, "interpolate", cfg, &[input, climate])
}

fn series_by_id(series: Vec<LakeSeries>, ids: &BTreeSet<u64>) -> Vec<LakeSeries> {
    series
        .into_iter()
        .filter(|s| ids.contains(&s.lake_id))
        .collect()
}

fn train_forecast(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    require(input)?;
    let series = within_area_range(&read_series_csv(input)?);
    if series.is_empty() {
        return Err(Error::Input(
            "no lakes within the forecasting area range".into(),
        ));
    }
    let strat = Stratification::new(&series)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_ids, test_ids) = stratified_split(&strat, cfg.train_fraction, &mut rng)?;
    let train_ids: BTreeSet<u64> = train_ids.into_iter().collect();
    let test_ids: BTreeSet<u64> = test_ids.into_iter().collect();
    let train_series = series_by_id(series.clone(), &train_ids);
    let test_series = series_by_id(series, &test_ids);
    let fc = cfg.forecast()?;
    let stats = FeatureStats::fit(&train_series)?;
    let train_w = build_windows(&train_series, fc.window_len, &stats)?;
    let test_w = build_windows(&test_series, fc.window_len, &stats)?;
    let mut model = LstmForecaster::<f32>::new(fc, stats)?;
    let curve = train_forecaster(&mut model, &train_w, &test_w)?;
    std::fs::create_dir_all(out)?;
    model.save(&out.join("forecaster.lkc"))?;
    let log_path = out.join("mse_log.csv");
    write_mse_csv(&log_path, &curve)?;
    sidecar(&log_path, "train-forecast", cfg, &[input])?;
    write_json(
        &out.join("split.json"),
        &json!({ "train": train_ids, "test": test_ids, "train_windows": train_w.len(), "test_windows": test_w.len() }),
    )
}

fn rmse(errors: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for e in errors {
        n += 1;
        s += e * e;
    }
    (n > 0).then(|| (s / n as f64).sqrt())
}

fn predict(
    cfg: &RunConfig,
    input: &Path,
    model: &Path,
    split: Option<&Path>,
    out: &Path,
) -> Result<()> {
    require(input)?;
    require(model)?;
    let model = LstmForecaster::<f32>::load(model)?;
    let series = read_series_csv(input)?;
    let mut next = Vec::new();
    for s in &series {
        match predict_next(&model, s) {
            Ok(p) => next.push(p),
            Err(why) => log::warn!("{why}"),
        }
    }
    std::fs::create_dir_all(out)?;
    let next_path = out.join("next_epoch.csv");
    write_predictions_csv(&next_path, &next)?;
    sidecar(&next_path, "predict", cfg, &[input])?;
    let mut summary = json!({ "forecasts": next.len(), "lakes": series.len() });
    if let Some(split) = split {
        require(split)?;
        let doc = read_json(split)?;
        let test: BTreeSet<u64> =
            serde_json::from_value(doc.get("test").cloned().unwrap_or(json!([])))?;
        let held_out = series_by_id(series, &test);
        let windows = build_windows(&held_out, model.config.window_len, &model.stats)?;
        let preds = hindcast(&model, &windows)?;
        let path = out.join("hindcast.csv");
        write_predictions_csv(&path, &preds)?;
        sidecar(&path, "predict", cfg, &[input, split])?;
        summary["hindcasts"] = json!(preds.len());
        summary["hindcast_rmse_km2"] =
            json!(rmse(preds.iter().filter_map(|p| {
                p.truth_area_km2.map(|t| p.predicted_area_km2 - t)
            })));
    }
    write_json(&out.join("summary.json"), &summary)
}

fn eval(
    cfg: &RunConfig,
    input: &Path,
    truth: Option<&Path>,
    lakes: Option<&Path>,
    predictions: Option<&Path>,
    out: &Path,
) -> Result<()> {
    require(input)?;
    let series = read_series_csv(input)?;
    std::fs::create_dir_all(out)?;
    let mut summary = json!({
        "lakes": series.len(),
        "cumulative_area_km2": plot::cumulative_area(&series),
    });
    if let Some(t) = truth {
        require(t)?;
        let report = recovery(&series, &read_truth_csv(t)?, 0.03, 2.0);
        summary["recovery"] = serde_json::to_value(&report)?;
    }
    if let Some(l) = lakes {
        let (features, _) = read_lakes(l)?;
        let loc = lake_locations(&features);
        let counts = aggregate(loc.values().map(|&(x, y)| (x, y, 1.0)));
        let p = out.join("lake_count_grid.csv");
        write_grid_csv(&p, &counts)?;
        sidecar(&p, "eval", cfg, &[input, l])?;
        let changes = aggregate(series.iter().filter_map(|s| {
            let vals: Vec<f64> = s.entries.iter().filter_map(|e| e.area_km2).collect();
            let (first, last) = (*vals.first()?, *vals.last()?);
            let &(x, y) = loc.get(&s.lake_id)?;
            (first > 0.0).then(|| (x, y, (last - first) / first))
        }));
        if !changes.is_empty() {
            let p = out.join("change_grid.csv");
            write_grid_csv(&p, &changes)?;
            sidecar(&p, "eval", cfg, &[input, l])?;
        }
        if let Some(pr) = predictions {
            require(pr)?;
            if pr.is_dir() {
                return Err(Error::Input(format!(
                    "{} is a directory; pass hindcast.csv or next_epoch.csv",
                    pr.display()
                )));
            }
            let preds = read_predictions_csv(pr)?;
            let errors = aggregate(preds.iter().filter_map(|p| {
                let &(x, y) = loc.get(&p.lake_id)?;
                Some((x, y, p.rel_error()?))
            }));
            let path = out.join("rel_error_grid.csv");
            write_grid_csv(&path, &errors)?;
            sidecar(&path, "eval", cfg, &[input, l, pr])?;
            summary["prediction_rmse_km2"] =
                json!(rmse(preds.iter().filter_map(|p| {
                    p.truth_area_km2.map(|t| p.predicted_area_km2 - t)
                })));
        }
    } else if predictions.is_some() {
        return Err(Error::Config(
            "--predictions needs --lakes to locate each lake".into(),
        ));
    }
    write_json(&out.join("eval.json"), &summary)
}

fn plot_cmd(kind: PlotKind, input: &Path, out: &Path) -> Result<()> {
    require(input)?;
    distinct(input, out)?;
    let svg = match kind {
        PlotKind::Loss => plot::training_curves(&read_log_csv(input)?)?.0,
        PlotKind::Metrics => plot::training_curves(&read_log_csv(input)?)?.1,
        PlotKind::Mse => plot::mse_curves(&read_mse_csv(input)?)?,
        PlotKind::Timeline => plot::area_timeline(&read_series_csv(input)?)?,
        PlotKind::GridCount => plot::grid_map(
            &read_grid_csv(input)?,
            "Lakes per 0.5° cell",
            GridValue::Count,
        )?,
        PlotKind::GridMean => plot::grid_map(
            &read_grid_csv(input)?,
            "Mean per 0.5° cell",
            GridValue::Mean,
        )?,
    };
    parent_dir(out)?;
    std::fs::write(out, svg)?;
    Ok(())
}
