//! One check per acceptance criterion. Each returns a short detail line on
//! success and the reason on failure.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use lakewatch::forecast::{
    build_windows, predict_next, stratified_split, train_forecaster, write_mse_csv,
    write_predictions_csv, FeatureStats, ForecastConfig, LstmForecaster, LstmLayer, Stratification,
};
use lakewatch::geom::{is_closed, signed_area, BBox, Point};
use lakewatch::nn::{mse, Linear};
use lakewatch::pipeline::{build_series, infer_epoch, match_all, recovery, vectorize};
use lakewatch::raster::{
    classify_flood_prone, composite, tile_and_infer, BinaryMask, FloodCriterion, GeoRaster,
    GridSpec, ModelKind, MonthlyStack, River, SegModels, Segmenter, NUM_EPOCHS,
};
use lakewatch::segtrain::{
    dice_score, save_dataset, train, tversky_loss, ConfusionCounts, Sample, SegTrainConfig,
    TverskyParams,
};
use lakewatch::swin::attention::mask_constant;
use lakewatch::swin::{
    swin_block_pair, FeatureMap, PatchExpand, PatchMerge, SwinBlock, SwinConfig, SwinUnet,
    WindowAttention, WindowGrid,
};
use lakewatch::synth::{sinusoid_series, training_samples, SynthWorld, WorldSpec};
use lakewatch::tensor::{ParamStore, Tape, Tensor, Var, GATHER_ZERO};
use lakewatch::vector::geojson::{lakes_to_geojson, write_json};
use lakewatch::vector::{
    contours_of, filter_rivers, interpolate_gaps, match_identity, write_series_csv, LakeFeature,
    LakeSeries, MatchParams, RTreeIndex, ReferenceLake, SeriesEntry, Status,
};
use rand::Rng;

use super::{gradcheck, max_abs_diff, normal_tensor, oracle, randomize, rng, zero_all, GradCheck};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs() < limit_s, || {
        format!(
            "{what} took {:.1} s, limit {limit_s} s",
            elapsed.as_secs_f64()
        )
    })
}

fn lift<T>(r: lakewatch::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 1

pub const GRAD_SEEDS: u64 = 20;

pub const GRAD_OPS: &[&str] = &[
    "matmul",
    "softmax",
    "layer_norm",
    "gelu",
    "sigmoid",
    "tanh",
    "elementwise",
    "window_attention",
    "swin_block_pair",
    "patch_merge",
    "patch_expand",
    "tversky_loss",
    "lstm_cell",
    "mse_head",
    "forecaster",
    "swin_unet",
];

fn uniform_away_from_zero<R: Rng>(r: &mut R, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = r.gen_range(0.5..2.0);
        if r.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn grad_swin_config() -> SwinConfig {
    SwinConfig {
        name: "grad".into(),
        patch_size: 2,
        window_size: 2,
        depths: vec![2, 2],
        heads: vec![1, 2],
        embed_dim: 4,
        in_channels: 1,
        num_classes: 2,
        mlp_ratio: 2,
        input_size: 16,
    }
}

/// Finite-difference check of one op family at one seed.
pub fn grad_case(op: &str, seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let mut store = ParamStore::<f64>::new();
    let none = ParamStore::<f64>::new();
    match op {
        "matmul" => {
            let x = [
                normal_tensor(&mut r, &[3, 4], 1.0),
                normal_tensor(&mut r, &[4, 5], 1.0),
            ];
            gradcheck(&none, &x, seed, |g, v| g.matmul(v[0], v[1]))
        }
        "softmax" => {
            let x = [normal_tensor(&mut r, &[4, 6], 2.0)];
            gradcheck(&none, &x, seed, |g, v| g.softmax(v[0]))
        }
        "layer_norm" => {
            let x = [
                normal_tensor(&mut r, &[5, 6], 1.5),
                normal_tensor(&mut r, &[6], 1.0),
                normal_tensor(&mut r, &[6], 1.0),
            ];
            gradcheck(&none, &x, seed, |g, v| g.layer_norm(v[0], v[1], v[2]))
        }
        "gelu" => {
            let x = [normal_tensor(&mut r, &[4, 5], 2.0)];
            gradcheck(&none, &x, seed, |g, v| Ok(g.gelu(v[0])))
        }
        "sigmoid" => {
            let x = [normal_tensor(&mut r, &[4, 5], 2.0)];
            gradcheck(&none, &x, seed, |g, v| Ok(g.sigmoid(v[0])))
        }
        "tanh" => {
            let x = [normal_tensor(&mut r, &[4, 5], 2.0)];
            gradcheck(&none, &x, seed, |g, v| Ok(g.tanh(v[0])))
        }
        "elementwise" => {
            let x = [
                normal_tensor(&mut r, &[2, 3, 4], 1.0),
                normal_tensor(&mut r, &[2, 5, 4], 1.0),
                uniform_away_from_zero(&mut r, &[2, 3, 5]),
                normal_tensor(&mut r, &[5], 1.0),
            ];
            let mut idx: Vec<usize> = (0..12).map(|_| r.gen_range(0..30)).collect();
            idx[3] = GATHER_ZERO;
            let idx: std::sync::Arc<[usize]> = idx.into();
            gradcheck(&none, &x, seed, move |g, v| {
                let s = g.bmm(v[0], v[1], true)?;
                let t = g.div(s, v[2])?;
                let u = g.add_suffix(t, v[3])?;
                let cat = g.concat(&[u, t])?;
                let sl = g.slice_lastdim(cat, 3, 5)?;
                let rs = g.reshape(sl, vec![6, 5])?;
                let ga = g.gather(rs, idx.clone(), vec![4, 3])?;
                let sq = g.mul(ga, ga)?;
                let d = g.sub(sq, ga)?;
                let m = g.mean(ga);
                let d = g.add_suffix(d, m)?;
                let sum = g.add(d, ga)?;
                Ok(g.scale(sum, 0.7))
            })
        }
        "window_attention" => {
            let att = WindowAttention::new(&mut store, &mut r, "att", 6, 2, 2).expect("attention");
            randomize(&mut store, &mut r, 0.5);
            let x = [normal_tensor(&mut r, &[4, 4, 6], 1.0)];
            let mask =
                (seed % 2 == 1).then(|| WindowGrid::new(4, 4, 2, 1).mask().expect("shifted mask"));
            gradcheck(&store, &x, seed, |g, v| {
                let m = mask.as_ref().map(|m| mask_constant(g, m, 4, 2, 4));
                att.forward(g, v[0], m)
            })
        }
        "swin_block_pair" => {
            let blocks = [false, true].map(|s| {
                SwinBlock::new(
                    &mut store,
                    &mut r,
                    if s { "sw" } else { "w" },
                    4,
                    2,
                    2,
                    s,
                    2,
                )
                .expect("block")
            });
            randomize(&mut store, &mut r, 0.5);
            let (h, w) = if seed % 2 == 1 { (5, 5) } else { (4, 4) };
            let x = [normal_tensor(&mut r, &[h * w, 4], 1.0)];
            gradcheck(&store, &x, seed, |g, v| {
                let fm = FeatureMap::new(g, v[0], 1, h, w)?;
                Ok(swin_block_pair(g, fm, &blocks)?.tokens)
            })
        }
        "patch_merge" => {
            let m = PatchMerge::new(&mut store, &mut r, "merge", 3, seed.is_multiple_of(2));
            randomize(&mut store, &mut r, 0.5);
            let x = [normal_tensor(&mut r, &[2 * 4 * 4, 3], 1.0)];
            gradcheck(&store, &x, seed, |g, v| {
                let fm = FeatureMap::new(g, v[0], 2, 4, 4)?;
                Ok(m.forward(g, fm)?.tokens)
            })
        }
        "patch_expand" => {
            let e = PatchExpand::new(&mut store, &mut r, "expand", 4).expect("expand");
            let f = PatchExpand::final_expand(&mut store, &mut r, "final", 2, 2);
            randomize(&mut store, &mut r, 0.5);
            let x = [normal_tensor(&mut r, &[2 * 3, 4], 1.0)];
            gradcheck(&store, &x, seed, |g, v| {
                let fm = FeatureMap::new(g, v[0], 1, 2, 3)?;
                let fm = e.forward(g, fm)?;
                Ok(f.forward(g, fm)?.tokens)
            })
        }
        "tversky_loss" => {
            let n = 12;
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.4))).collect();
            labels[0] = 0;
            labels[1] = 1;
            let p =
                TverskyParams::new(r.gen_range(0.1..0.9), r.gen_range(0.1..0.9)).expect("weights");
            let x = [normal_tensor(&mut r, &[n, 2], 2.0)];
            gradcheck(&none, &x, seed, |g, v| {
                let probs = g.softmax(v[0])?;
                tversky_loss(g, probs, &labels, p)
            })
        }
        "lstm_cell" => {
            let layer = LstmLayer::new(&mut store, &mut r, "lstm", 3, 4);
            randomize(&mut store, &mut r, 0.5);
            let x = [
                normal_tensor(&mut r, &[2, 3], 1.0),
                normal_tensor(&mut r, &[2, 4], 0.5),
                normal_tensor(&mut r, &[2, 4], 1.0),
            ];
            gradcheck(&store, &x, seed, |g, v| {
                let (h, c) = layer.cell(g, v[0], v[1], v[2])?;
                g.concat(&[h, c])
            })
        }
        "mse_head" => {
            let head = Linear::new(&mut store, &mut r, "head", 4, 1, true);
            randomize(&mut store, &mut r, 0.5);
            let x = [
                normal_tensor(&mut r, &[5, 4], 1.0),
                normal_tensor(&mut r, &[5, 1], 1.0),
            ];
            gradcheck(&store, &x, seed, |g, v| {
                let y = head.forward(g, v[0])?;
                mse(g, y, v[1])
            })
        }
        "forecaster" => {
            let cfg = ForecastConfig {
                window_len: 3,
                hidden: 4,
                layers: 2,
                seed,
                ..ForecastConfig::default()
            };
            let stats = FeatureStats {
                mean: [0.0; 4],
                std: [1.0; 4],
            };
            let mut model = LstmForecaster::<f64>::new(cfg, stats).expect("forecaster");
            randomize(&mut model.params, &mut r, 0.5);
            let x: Vec<Tensor<f64>> = (0..3)
                .map(|_| normal_tensor(&mut r, &[2, 4], 1.0))
                .collect();
            let target = normal_tensor(&mut r, &[2, 1], 1.0);
            gradcheck(&model.params, &x, seed, |g, v| {
                let y = model.forward(g, v)?;
                let t = g.constant(target.clone());
                mse(g, y, t)
            })
        }
        "swin_unet" => {
            let mut model = SwinUnet::<f64>::new(grad_swin_config(), seed).expect("model");
            randomize(&mut model.params, &mut r, 0.3);
            let x = [normal_tensor(&mut r, &[1, 16, 16, 1], 1.0)];
            gradcheck(&model.params, &x, seed, |g, v| model.forward(g, v[0]))
        }
        other => panic!("no gradient case {other}"),
    }
}

pub fn grad_op(op: &str) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for seed in 0..GRAD_SEEDS {
        let c = grad_case(op, seed);
        ensure(c.probes > 0, || format!("{op}: nothing probed"))?;
        ensure(c.ok(), || {
            format!(
                "{op} seed {seed}: relative error {:.2e} at {}",
                c.max_rel, c.worst
            )
        })?;
        worst = worst.max(c.max_rel);
    }
    Ok(worst)
}

pub fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut worst = (0.0, "");
    for op in GRAD_OPS {
        let e = grad_op(op)?;
        if e >= worst.0 {
            worst = (e, op);
        }
    }
    within(t0.elapsed(), 300, "gradient suite")?;
    Ok(format!(
        "{} ops x {GRAD_SEEDS} seeds, worst relative error {:.1e} ({}), {:.1} s",
        GRAD_OPS.len(),
        worst.0,
        worst.1,
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn run<F: FnOnce(&mut Tape<f64>) -> lakewatch::Result<Var>>(
    store: &ParamStore<f64>,
    f: F,
) -> Vec<f64> {
    let mut g = Tape::bind(store, false);
    let y = f(&mut g).expect("forward");
    g.value(y).data().to_vec()
}

pub fn attention_dense_error() -> f64 {
    let mut worst = 0.0f64;
    let mut r = rng(2);
    for m in [2usize, 4, 7] {
        for heads in [1usize, 3, 12] {
            let mut store = ParamStore::<f64>::new();
            let dim = 2 * heads;
            let att =
                WindowAttention::new(&mut store, &mut r, "att", dim, heads, m).expect("attention");
            randomize(&mut store, &mut r, 0.5);
            let n = m * m;
            let mask = WindowGrid::new(2 * m, 2 * m, m, m / 2)
                .mask()
                .expect("shifted mask");
            let x = normal_tensor(&mut r, &[8, n, dim], 1.0);
            for masked in [false, true] {
                let got = run(&store, |g| {
                    let xv = g.constant(x.clone());
                    let mk = masked.then(|| mask_constant(g, &mask, 4, heads, n));
                    att.forward(g, xv, mk)
                });
                let want = oracle::dense_window_attention(
                    &att,
                    &store,
                    x.data(),
                    masked.then_some(mask.as_slice()),
                );
                worst = worst.max(max_abs_diff(&got, &want));
            }
        }
    }
    worst
}

/// `(h, w, window, dim, heads)`; several need padding.
pub const SHIFT_CASES: &[(usize, usize, usize, usize, usize)] = &[
    (8, 8, 4, 8, 2),
    (6, 10, 4, 8, 2),
    (5, 7, 2, 6, 3),
    (14, 14, 7, 12, 3),
    (9, 9, 4, 8, 1),
    (12, 8, 4, 4, 4),
];

pub fn shifted_block_error() -> f64 {
    let mut worst = 0.0f64;
    let mut r = rng(3);
    for &(h, w, m, dim, heads) in SHIFT_CASES {
        for shifted in [false, true] {
            let mut store = ParamStore::<f64>::new();
            let block =
                SwinBlock::new(&mut store, &mut r, "b", dim, heads, m, shifted, 2).expect("block");
            randomize(&mut store, &mut r, 0.5);
            if shifted {
                assert!(
                    block.grid(h, w).shift > 0,
                    "case {h}x{w} M={m} should shift"
                );
            }
            let z = normal_tensor(&mut r, &[h * w, dim], 1.0);
            let got = run(&store, |g| {
                let zv = g.constant(z.clone());
                let fm = FeatureMap::new(g, zv, 1, h, w)?;
                Ok(block.attention(g, fm)?.tokens)
            });
            let want = oracle::shifted_attention_oracle(&block, &store, z.data(), h, w);
            worst = worst.max(max_abs_diff(&got, &want));
        }
    }
    worst
}

/// Perturb token `(0, 0)` of an 8×8 map and report, per setting, whether
/// any token outside its first window moved.
pub fn information_flow() -> Result<(), String> {
    let (h, w, m, dim) = (8, 8, 4, 8);
    let mut r = rng(4);
    let mut store = ParamStore::<f64>::new();
    let first = SwinBlock::new(&mut store, &mut r, "w", dim, 2, m, false, 2).expect("block");
    let shifted = SwinBlock::new(&mut store, &mut r, "sw", dim, 2, m, true, 2).expect("block");
    let plain = SwinBlock::new(&mut store, &mut r, "w2", dim, 2, m, false, 2).expect("block");
    randomize(&mut store, &mut r, 0.5);
    let z = normal_tensor(&mut r, &[h * w, dim], 1.0);
    let mut z2 = z.clone();
    let kick = normal_tensor(&mut r, &[dim], 1.0);
    for k in 0..dim {
        z2.data_mut()[k] += kick.data()[k];
    }
    let apply = |blocks: &[&SwinBlock], z: &Tensor<f64>| {
        run(&store, |g| {
            let zv = g.constant(z.clone());
            let mut fm = FeatureMap::new(g, zv, 1, h, w)?;
            for b in blocks {
                fm = b.forward(g, fm)?;
            }
            Ok(fm.tokens)
        })
    };
    let outside = |a: &[f64], b: &[f64]| -> f64 {
        let mut d = 0.0f64;
        for row in 0..h {
            for col in 0..w {
                if row < m && col < m {
                    continue;
                }
                for k in 0..dim {
                    let i = (row * w + col) * dim + k;
                    d = d.max((a[i] - b[i]).abs());
                }
            }
        }
        d
    };
    let one = outside(&apply(&[&first], &z), &apply(&[&first], &z2));
    ensure(one == 0.0, || {
        format!("W-MSA leaked across windows ({one:.2e})")
    })?;
    let two_plain = outside(
        &apply(&[&first, &plain], &z),
        &apply(&[&first, &plain], &z2),
    );
    ensure(two_plain == 0.0, || {
        format!("two W-MSA blocks leaked across windows ({two_plain:.2e})")
    })?;
    let a = apply(&[&first, &shifted], &z);
    let b = apply(&[&first, &shifted], &z2);
    let pair = outside(&a, &b);
    ensure(pair > 1e-6, || {
        format!("W-MSA + SW-MSA did not carry information across windows ({pair:.2e})")
    })?;
    let probe = (4 * w + 4) * dim;
    let moved = max_abs_diff(&a[probe..probe + dim], &b[probe..probe + dim]);
    ensure(moved > 1e-6, || {
        format!("token (4,4) did not respond to token (0,0) ({moved:.2e})")
    })
}

pub fn c2_attention() -> Outcome {
    let dense = attention_dense_error();
    ensure(dense < 1e-6, || {
        format!("dense oracle deviation {dense:.2e}")
    })?;
    let shifted = shifted_block_error();
    ensure(shifted < 1e-6, || {
        format!("shifted-window oracle deviation {shifted:.2e}")
    })?;
    information_flow()?;
    Ok(format!(
        "dense max |diff| {dense:.1e}, shifted/padded max |diff| {shifted:.1e}, information flow ok"
    ))
}

// ---------------------------------------------------------------- 3

pub fn zero_pair_error() -> f64 {
    let mut worst = 0.0f64;
    let mut r = rng(5);
    for (batch, h, w, m) in [(2, 8, 8, 4), (1, 6, 6, 4), (1, 5, 7, 2)] {
        let mut store = ParamStore::<f64>::new();
        let blocks = [false, true].map(|s| {
            SwinBlock::new(
                &mut store,
                &mut r,
                if s { "sw" } else { "w" },
                8,
                2,
                m,
                s,
                4,
            )
            .unwrap()
        });
        zero_all(&mut store);
        let z = normal_tensor(&mut r, &[batch * h * w, 8], 3.0);
        let got = run(&store, |g| {
            let zv = g.constant(z.clone());
            let fm = FeatureMap::new(g, zv, batch, h, w)?;
            Ok(swin_block_pair(g, fm, &blocks)?.tokens)
        });
        worst = worst.max(max_abs_diff(&got, z.data()));
    }
    worst
}

pub fn c3_residual_identity() -> Outcome {
    let e = zero_pair_error();
    ensure(e < 1e-7, || {
        format!("zero-weight pair moved the input by {e:.2e}")
    })?;
    Ok(format!("max |out - in| {e:.1e}"))
}

// ---------------------------------------------------------------- 4

pub fn random_mask<R: Rng>(r: &mut R, w: usize, h: usize, p: f64) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| u8::from(r.gen_bool(p))).collect()).expect("mask")
}

pub fn metric_mismatch(seed: u64) -> Option<String> {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(1..48), r.gen_range(1..48));
    let (pp, pt) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
    let pred = random_mask(&mut r, w, h, pp);
    let truth = random_mask(&mut r, w, h, pt);
    let c = ConfusionCounts::from_masks(&pred.data, &truth.data).ok()?;
    let (tp, tn, fp, fneg) = oracle::confusion(&pred.data, &truth.data);
    if (c.tp, c.tn, c.fp, c.fn_) != (tp, tn, fp, fneg) {
        return Some(format!(
            "seed {seed}: counts {c:?} vs {:?}",
            (tp, tn, fp, fneg)
        ));
    }
    let n = (w * h) as u64;
    let pa = (tp + tn) as f64 / n as f64;
    let iou = |hit: u64| {
        if hit + fp + fneg == 0 {
            1.0
        } else {
            hit as f64 / (hit + fp + fneg) as f64
        }
    };
    let miou = (iou(tp) + iou(tn)) / 2.0;
    if c.pixel_accuracy().ok()? != pa || c.miou().ok()? != miou {
        return Some(format!(
            "seed {seed}: PA/MIoU differ from the confusion oracle"
        ));
    }
    None
}

pub fn dice_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..400);
    let p0: Vec<f64> = (0..n).map(|_| r.gen_range(0.001..0.999)).collect();
    let labels: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.5))).collect();
    let probs = Tensor::from_fn(vec![n, 2], |i| {
        if i % 2 == 0 {
            p0[i / 2]
        } else {
            1.0 - p0[i / 2]
        }
    });
    let mut g = Tape::<f64>::new();
    let pv = g.constant(probs);
    let loss =
        tversky_loss(&mut g, pv, &labels, TverskyParams::new(0.5, 0.5).unwrap()).expect("loss");
    let t = 1.0 - g.value(loss).data()[0];
    (t - dice_score(&p0, &labels)).abs()
}

pub fn c4_metrics() -> Outcome {
    for seed in 0..100 {
        if let Some(m) = metric_mismatch(seed) {
            return Err(m);
        }
    }
    let worst = (0..100).map(dice_error).fold(0.0, f64::max);
    ensure(worst < 1e-9, || {
        format!("1 - Tversky(0.5, 0.5) differs from Dice by {worst:.2e}")
    })?;
    Ok(format!("100 masks exact, Dice max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

/// Eight 64×64 tiles, each holding one bright elliptical lake.
pub fn overfit_set() -> Vec<Sample> {
    let mut r = rng(5);
    let n = 64;
    (0..8)
        .map(|_| {
            let cx = r.gen_range(15.0..49.0);
            let cy = r.gen_range(15.0..49.0);
            let a: f64 = r.gen_range(12.0..22.0);
            let b: f64 = r.gen_range(12.0..22.0);
            let mut img = vec![0f32; n * n];
            let mut lab = vec![0u8; n * n];
            for row in 0..n {
                for col in 0..n {
                    let dx = (col as f64 + 0.5 - cx) / a;
                    let dy = (row as f64 + 0.5 - cy) / b;
                    if dx * dx + dy * dy <= 1.0 {
                        img[row * n + col] = r.gen_range(0.85..1.0);
                        lab[row * n + col] = 1;
                    }
                }
            }
            let grid = GridSpec {
                width: n,
                height: n,
                origin_lon: 0.0,
                origin_lat: 0.0,
                pixel_deg: 0.001,
            };
            Sample::new(
                GeoRaster::from_data(grid, img).unwrap(),
                BinaryMask::new(n, n, lab).unwrap(),
                false,
            )
            .unwrap()
        })
        .collect()
}

pub fn c5_tiny_overfit() -> Outcome {
    let t0 = Instant::now();
    let set = overfit_set();
    let mut model = lift(SwinUnet::<f32>::new(
        lift(SwinConfig::variant("swin-unet-test"))?,
        1,
    ))?;
    let cfg = SegTrainConfig {
        epochs: 200,
        batch_size: 1,
        tile_size: 64,
        augment: false,
        ..SegTrainConfig::default()
    };
    let report = lift(train(&mut model, &set, &set, &cfg, None))?;
    let first = report.log.iter().find(|e| e.miou >= 0.99).map(|e| e.epoch);
    within(t0.elapsed(), 600, "tiny overfit")?;
    ensure(report.best_miou >= 0.99, || {
        format!(
            "best MIoU {:.4} after {} epochs",
            report.best_miou,
            report.log.len()
        )
    })?;
    Ok(format!(
        "MIoU {:.4} (first >= 0.99 at epoch {}), {} epochs, {:.1} s",
        report.best_miou,
        first.unwrap_or(0),
        report.log.len(),
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 6

fn grid(w: usize, h: usize, pixel_deg: f64) -> GridSpec {
    GridSpec {
        width: w,
        height: h,
        origin_lon: 0.0,
        origin_lat: h as f64 * pixel_deg,
        pixel_deg,
    }
}

pub fn random_stack(seed: u64) -> MonthlyStack {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(1..20), r.gen_range(1..20));
    let miss = r.gen_range(0.0..0.95);
    let wet = r.gen_range(0.0..1.0);
    let layers = (0..24)
        .map(|_| {
            let data = (0..w * h)
                .map(|_| if r.gen_bool(wet) { 1.0 } else { 0.0 })
                .collect();
            let mut l = GeoRaster::from_data(grid(w, h, 0.01), data).unwrap();
            for i in 0..w * h {
                if r.gen_bool(miss) {
                    l.set_nodata(i);
                }
            }
            l
        })
        .collect();
    MonthlyStack::new(seed as usize % NUM_EPOCHS, layers).unwrap()
}

pub fn composite_matches(seed: u64) -> Result<(), String> {
    let stack = random_stack(seed);
    let out = lift(composite(&stack))?;
    for (i, o) in oracle::occurrence(&stack).into_iter().enumerate() {
        match o {
            None => ensure(out.nodata[i], || {
                format!("stack {seed} pixel {i}: expected nodata")
            })?,
            Some((water, valid)) => ensure(
                !out.nodata[i] && out.data[i] == water as f32 / valid as f32,
                || format!("stack {seed} pixel {i}: {} vs {water}/{valid}", out.data[i]),
            )?,
        }
    }
    Ok(())
}

struct Fill(u8);

impl Segmenter for Fill {
    fn segment(&self, tiles: &[Vec<f32>], tile: usize) -> lakewatch::Result<Vec<Vec<u8>>> {
        Ok(tiles.iter().map(|_| vec![self.0; tile * tile]).collect())
    }
}

struct Threshold;

impl Segmenter for Threshold {
    fn segment(&self, tiles: &[Vec<f32>], _tile: usize) -> lakewatch::Result<Vec<Vec<u8>>> {
        Ok(tiles
            .iter()
            .map(|t| t.iter().map(|&v| u8::from(v > 0.0)).collect())
            .collect())
    }
}

/// A raster of 50 tiles with a different wet/seasonal mix per tile; returns
/// `(flood, non-flood)` tile counts.
pub fn routing_matches(seed: u64) -> Result<(usize, usize), String> {
    let mut r = rng(seed);
    let (tile, nx, ny) = (8, 10, 5);
    let (w, h) = (tile * nx, tile * ny);
    let mut raster = GeoRaster::filled(grid(w, h, 0.001), 0.0);
    let mut buffer = BinaryMask::zeros(w, h);
    for ty in 0..ny {
        for tx in 0..nx {
            let seasonal = r.gen_range(0.0..0.4);
            let dry = r.gen_range(0.0..0.5);
            let miss = r.gen_range(0.0..0.3);
            let buf = r.gen_range(0.0..1.0);
            for row in ty * tile..(ty + 1) * tile {
                for col in tx * tile..(tx + 1) * tile {
                    let i = row * w + col;
                    buffer.data[i] = u8::from(r.gen_bool(buf));
                    if r.gen_bool(miss) {
                        raster.set_nodata(i);
                    } else if r.gen_bool(dry) {
                        raster.data[i] = 0.0;
                    } else if r.gen_bool(seasonal) {
                        raster.data[i] = r.gen_range(0.01..0.75);
                    } else {
                        raster.data[i] = r.gen_range(0.75..=1.0);
                    }
                }
            }
        }
    }
    let c = FloodCriterion::default();
    let (one, zero) = (Fill(1), Fill(0));
    let models = SegModels {
        flood: &one,
        nonflood: &zero,
    };
    let m = lift(tile_and_infer(&raster, 0, &models, &buffer, &c, tile))?;
    let mut counts = (0, 0);
    for rec in &m.provenance {
        let sub = raster.crop_padded(rec.col, rec.row, tile, tile);
        let sub_buf = BinaryMask::new(
            tile,
            tile,
            (0..tile * tile)
                .map(|k| buffer.data[(rec.row + k / tile) * w + rec.col + k % tile])
                .collect(),
        )
        .unwrap();
        let want = oracle::flood_prone(&sub, &sub_buf, c.freq_cutoff, c.threshold);
        let direct = lift(classify_flood_prone(&sub, &sub_buf, &c))?;
        ensure(
            direct == want && (rec.model == ModelKind::Flood) == want,
            || {
                format!(
                    "tile {} routed {:?}, oracle says flood = {want}",
                    rec.index, rec.model
                )
            },
        )?;
        ensure(m.mask.get(rec.col, rec.row) == want, || {
            format!("tile {} mask came from the wrong model", rec.index)
        })?;
        if want {
            counts.0 += 1;
        } else {
            counts.1 += 1;
        }
    }
    Ok(counts)
}

pub fn tiling_identity(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(5..70), r.gen_range(5..70));
    let tile = r.gen_range(6..24);
    let mask = random_mask(&mut r, w, h, 0.5);
    let raster = GeoRaster::from_data(
        grid(w, h, 0.001),
        mask.data.iter().map(|&v| f32::from(v)).collect(),
    )
    .unwrap();
    let models = SegModels {
        flood: &Threshold,
        nonflood: &Threshold,
    };
    let out = lift(tile_and_infer(
        &raster,
        1,
        &models,
        &BinaryMask::zeros(w, h),
        &FloodCriterion::default(),
        tile,
    ))?;
    ensure(out.mask == mask, || {
        format!("{w}x{h} with tile {tile} did not reassemble")
    })
}

pub fn c6_composite_routing() -> Outcome {
    for seed in 0..20 {
        composite_matches(seed)?;
    }
    let total = routing_matches(0)?;
    ensure(total.0 > 0 && total.1 > 0, || {
        format!("routing fixture lacks one class: {total:?}")
    })?;
    for seed in 0..20 {
        tiling_identity(seed)?;
    }
    Ok(format!(
        "20 stacks exact, 50 tiles routed as recomputed ({} flood, {} non-flood), 20 reassemblies exact",
        total.0, total.1
    ))
}

// ---------------------------------------------------------------- 7

fn pixel_grid(w: usize, h: usize) -> GridSpec {
    grid(w, h, 1.0)
}

pub fn blob_mask(seed: u64) -> BinaryMask {
    let mut r = rng(seed);
    let (w, h) = (r.gen_range(3..40), r.gen_range(3..40));
    let p = r.gen_range(0.2..0.75);
    random_mask(&mut r, w, h, p)
}

pub fn contour_partition(seed: u64) -> Result<(), String> {
    let mask = blob_mask(seed);
    let (w, h) = (mask.width, mask.height);
    let features = contours_of(&mask, &pixel_grid(w, h), 0);
    let comps = oracle::components(&mask);
    ensure(features.len() == comps.len(), || {
        format!(
            "mask {seed}: {} features vs {} components",
            features.len(),
            comps.len()
        )
    })?;
    let total: usize = features.iter().map(|f| f.pixel_count).sum();
    ensure(total == mask.count(), || {
        format!(
            "mask {seed}: contours cover {total} of {} pixels",
            mask.count()
        )
    })?;
    for (f, comp) in features.iter().zip(&comps) {
        ensure(f.pixel_count == comp.len(), || {
            format!("mask {seed}: component size mismatch")
        })?;
        ensure(is_closed(&f.ring), || format!("mask {seed}: open ring"))?;
        let filled = oracle::filled(comp, w, h).iter().filter(|&&v| v).count();
        let area = signed_area(&f.ring);
        ensure(area == filled as f64, || {
            format!("mask {seed}: ring encloses {area} pixels, flood fill says {filled}")
        })?;
    }
    Ok(())
}

/// Whether a densely sampled polyline enters any filled pixel.
fn sampled_overlap(line: &[Point], filled: &[bool], w: usize, h: usize) -> bool {
    line.windows(2).any(|s| {
        let len = ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt();
        let steps = (len / 1e-4).ceil().max(1.0) as usize;
        (0..=steps).any(|k| {
            let t = k as f64 / steps as f64;
            let x = s[0].0 + t * (s[1].0 - s[0].0);
            let y = s[0].1 + t * (s[1].1 - s[0].1);
            let (col, row) = (x.floor(), (h as f64 - y).floor());
            col >= 0.0
                && row >= 0.0
                && (col as usize) < w
                && (row as usize) < h
                && filled[row as usize * w + col as usize]
        })
    })
}

/// Filtering decisions against rasterized overlap, for fixed crossing,
/// disjoint and contained rivers and for random lines over random masks.
pub fn river_filter_matches(seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut checked = 0;
    let square = {
        let mut m = BinaryMask::zeros(20, 20);
        for row in 5..15 {
            for col in 5..15 {
                m.data[row * 20 + col] = 1;
            }
        }
        m
    };
    let fixtures: Vec<(Vec<Point>, f64, bool)> = vec![
        (vec![(0.0, 10.1), (20.0, 10.3)], 1500.0, false),
        (vec![(0.0, 1.2), (20.0, 1.6)], 1500.0, true),
        (vec![(8.2, 12.1), (12.3, 11.4)], 1500.0, false),
        (vec![(0.0, 10.1), (20.0, 10.3)], 400.0, true),
        (vec![(2.1, 18.0), (2.4, 0.5), (18.5, 0.7)], 3000.0, true),
    ];
    let mut cases: Vec<(BinaryMask, Vec<Point>, f64, Option<bool>)> = fixtures
        .into_iter()
        .map(|(l, wd, keep)| (square.clone(), l, wd, Some(keep)))
        .collect();
    for _ in 0..20 {
        let mask = blob_mask(r.gen());
        let (w, h) = (mask.width as f64, mask.height as f64);
        let pt = |r: &mut rand_chacha::ChaCha8Rng| {
            (r.gen_range(-2.0..w + 2.0), r.gen_range(-2.0..h + 2.0))
        };
        let line = vec![pt(&mut r), pt(&mut r)];
        cases.push((mask, line, 1500.0, None));
    }
    for (mask, line, width, expect) in cases {
        let (w, h) = (mask.width, mask.height);
        let features = contours_of(&mask, &pixel_grid(w, h), 0);
        let river = River {
            points: line.clone(),
            width_m: width,
        };
        let kept = filter_rivers(features.clone(), std::slice::from_ref(&river), 1000.0);
        for (comp, f) in oracle::components(&mask).iter().zip(&features) {
            let filled = oracle::filled(comp, w, h);
            let keep = width <= 1000.0 || !sampled_overlap(&line, &filled, w, h);
            let got = kept.iter().any(|k| k.ring == f.ring);
            ensure(got == keep, || {
                format!("line {line:?} width {width}: kept = {got}, oracle = {keep}")
            })?;
            if let Some(e) = expect {
                ensure(e == keep, || {
                    format!("fixture {line:?}: oracle disagrees with the fixture")
                })?;
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
}

pub fn rtree_superset(seed: u64, queries: usize) -> Result<(), String> {
    let mut r = rng(seed);
    let lakes: Vec<ReferenceLake> = (0..500)
        .map(|i| {
            let (x, y) = (r.gen_range(0.0..100.0), r.gen_range(0.0..100.0));
            let (sx, sy) = (r.gen_range(0.05..5.0), r.gen_range(0.05..5.0));
            ReferenceLake {
                lake_id: 1000 - i,
                polygon: vec![rect(x, y, x + sx, y + sy)],
                area_km2: sx * sy,
            }
        })
        .collect();
    let index = lift(RTreeIndex::build(lakes.clone()))?;
    for q in 0..queries {
        let (x, y) = (r.gen_range(-5.0..105.0), r.gen_range(-5.0..105.0));
        let b = BBox::of_points(&[
            (x, y),
            (x + r.gen_range(0.0..10.0), y + r.gen_range(0.0..10.0)),
        ]);
        let got: BTreeSet<u64> = index.query(&b).iter().map(|l| l.lake_id).collect();
        let brute: BTreeSet<u64> = lakes
            .iter()
            .filter(|l| l.bbox().intersects(&b))
            .map(|l| l.lake_id)
            .collect();
        ensure(got.is_superset(&brute), || {
            format!("query {q}: candidates miss {:?}", brute.difference(&got))
        })?;
    }
    Ok(())
}

pub fn c7_geometry() -> Outcome {
    for seed in 0..100 {
        contour_partition(seed)?;
    }
    let checked = river_filter_matches(7)?;
    rtree_superset(7, 10_000)?;
    Ok(format!(
        "100 masks partitioned with holes filled, {checked} river decisions, 10000 R-tree queries"
    ))
}

// ---------------------------------------------------------------- 8

/// A one-pixel-high feature strip of 1000 pixels on a 0.001° grid.
fn strip_fixture() -> (GridSpec, LakeFeature) {
    let g = GridSpec {
        width: 1000,
        height: 3,
        origin_lon: 0.0,
        origin_lat: 0.003,
        pixel_deg: 0.001,
    };
    let feature = LakeFeature {
        epoch: 0,
        ring: rect(0.0, 0.001, 1.0, 0.002),
        pixel_count: 1000,
        area_km2: 1000.0 * g.pixel_area_km2(1),
        lake_id: None,
    };
    (g, feature)
}

fn reference(id: u64, cols: (usize, usize)) -> ReferenceLake {
    ReferenceLake {
        lake_id: id,
        polygon: vec![rect(
            cols.0 as f64 * 0.001,
            0.0,
            cols.1 as f64 * 0.001,
            0.003,
        )],
        area_km2: 0.0,
    }
}

pub fn matching_fixtures() -> Result<(), String> {
    let (g, f) = strip_fixture();
    let p = MatchParams::default();
    let id_of = |lakes: Vec<ReferenceLake>| {
        match_identity(&f, &RTreeIndex::build(lakes).unwrap(), &g, &p).lake_id
    };
    ensure(id_of(vec![reference(1, (0, 300))]) == Some(1), || {
        "30.0% overlap rejected".into()
    })?;
    ensure(id_of(vec![reference(1, (0, 299))]).is_none(), || {
        "29.9% overlap accepted".into()
    })?;
    ensure(
        id_of(vec![reference(9, (0, 400)), reference(4, (500, 900))]) == Some(4),
        || "tie did not go to the smaller id".into(),
    )?;
    ensure(
        id_of(vec![reference(9, (0, 401)), reference(4, (500, 900))]) == Some(9),
        || "larger overlap lost".into(),
    )?;
    ensure(
        id_of(vec![reference(2, (0, 200)), reference(3, (200, 400))]).is_none(),
        || "two 20% overlaps were combined".into(),
    )?;
    Ok(())
}

pub fn random_series(seed: u64) -> LakeSeries {
    let mut r = rng(seed);
    let p = r.gen_range(0.05..0.7);
    LakeSeries {
        lake_id: seed,
        entries: (0..NUM_EPOCHS)
            .map(|_| {
                if r.gen_bool(p) {
                    SeriesEntry::MISSING
                } else {
                    SeriesEntry {
                        area_km2: Some(r.gen_range(0.1..100.0)),
                        status: Status::Observed,
                        climate: None,
                    }
                }
            })
            .collect(),
    }
}

pub fn interpolation_exact(seed: u64) -> Result<(), String> {
    let s = random_series(seed);
    let out = interpolate_gaps(&s, 3);
    let e = &s.entries;
    let n = e.len();
    let mut i = 0;
    while i < n {
        if e[i].area_km2.is_some() {
            ensure(out.entries[i] == e[i], || {
                format!("series {seed}: observed epoch {i} changed")
            })?;
            i += 1;
            continue;
        }
        let start = i;
        while i < n && e[i].area_km2.is_none() {
            i += 1;
        }
        let len = i - start;
        let interior = start > 0 && i < n;
        for k in start..i {
            let got = out.entries[k];
            if interior && len <= 3 {
                let (a, b) = (e[start - 1].area_km2.unwrap(), e[i].area_km2.unwrap());
                let t = (k - start + 1) as f64 / (len + 1) as f64;
                let want = a + t * (b - a);
                let v = got
                    .area_km2
                    .ok_or(format!("series {seed}: epoch {k} not filled"))?;
                ensure(
                    (v - want).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()),
                    || format!("series {seed}: epoch {k} = {v}, linear value {want}"),
                )?;
                ensure(got.status == Status::Interpolated, || {
                    format!("series {seed}: status {:?}", got.status)
                })?;
            } else {
                ensure(
                    got.area_km2.is_none() && got.status == Status::Missing,
                    || {
                        format!("series {seed}: epoch {k} of a run of {len} (interior = {interior}) was filled")
                    },
                )?;
            }
        }
    }
    ensure(interpolate_gaps(&out, 3) == out, || {
        format!("series {seed}: not idempotent")
    })
}

pub fn c8_matching_interpolation() -> Outcome {
    matching_fixtures()?;
    for seed in 0..500 {
        interpolation_exact(seed)?;
    }
    Ok("30.0% accepted, 29.9% rejected, ties to smaller id; 500 series interpolated exactly and idempotently".into())
}

// ---------------------------------------------------------------- 9

pub fn lstm_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (din, hid, batch) = (r.gen_range(1..6), r.gen_range(1..9), r.gen_range(1..4));
    let mut store = ParamStore::<f64>::new();
    let layer = LstmLayer::new(&mut store, &mut r, "l", din, hid);
    randomize(&mut store, &mut r, 0.7);
    let x = normal_tensor(&mut r, &[batch, din], 1.0);
    let h = normal_tensor(&mut r, &[batch, hid], 0.5);
    let c = normal_tensor(&mut r, &[batch, hid], 1.0);
    let mut g = Tape::bind(&store, false);
    let (xv, hv, cv) = (
        g.constant(x.clone()),
        g.constant(h.clone()),
        g.constant(c.clone()),
    );
    let (ht, ct) = layer.cell(&mut g, xv, hv, cv).expect("cell");
    let (want_h, want_c) = oracle::lstm_cell(&layer, &store, x.data(), h.data(), c.data());
    max_abs_diff(g.value(ht).data(), &want_h).max(max_abs_diff(g.value(ct).data(), &want_c))
}

/// Test RMSE (standardized units) of a two-layer forecaster on noiseless
/// sinusoid-plus-trend lakes, with the epoch it first went below 0.05.
pub fn sinusoid_learnability(epochs: usize) -> Result<(f64, Option<usize>), String> {
    let series = sinusoid_series(50, 11);
    let strat = lift(Stratification::new(&series))?;
    let (train_ids, test_ids) = lift(stratified_split(&strat, 0.8, &mut rng(12)))?;
    let pick = |ids: &[u64]| -> Vec<LakeSeries> {
        series
            .iter()
            .filter(|s| ids.contains(&s.lake_id))
            .cloned()
            .collect()
    };
    let (train_s, test_s) = (pick(&train_ids), pick(&test_ids));
    let stats = lift(FeatureStats::fit(&train_s))?;
    let cfg = ForecastConfig {
        epochs,
        batch_size: 16,
        lr: 0.003,
        seed: 3,
        ..ForecastConfig::default()
    };
    let train_w = lift(build_windows(&train_s, cfg.window_len, &stats))?;
    let test_w = lift(build_windows(&test_s, cfg.window_len, &stats))?;
    let mut model = lift(LstmForecaster::<f32>::new(cfg, stats))?;
    let curve = lift(train_forecaster(&mut model, &train_w, &test_w))?;
    let first = curve
        .iter()
        .find(|c| c.test_mse.sqrt() < 0.05)
        .map(|c| c.epoch);
    Ok((curve.last().map_or(f64::NAN, |c| c.test_mse.sqrt()), first))
}

pub fn c9_lstm() -> Outcome {
    let worst = (0..20).map(lstm_oracle_error).fold(0.0, f64::max);
    ensure(worst < 1e-6, || {
        format!("lstm_cell deviates from the scalar oracle by {worst:.2e}")
    })?;
    let t0 = Instant::now();
    let (rmse, first) = sinusoid_learnability(300)?;
    within(t0.elapsed(), 300, "forecaster training")?;
    ensure(rmse < 0.05, || {
        format!("test RMSE {rmse:.4} after 300 epochs")
    })?;
    Ok(format!(
        "cell max |diff| {worst:.1e}; test RMSE {rmse:.4} (below 0.05 from epoch {}), {:.1} s",
        first.unwrap_or(0),
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 10

pub fn c10_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let source = lift(SynthWorld::generate(&WorldSpec {
        seed: 1000,
        ..WorldSpec::default()
    }))?;
    let train_set = lift(training_samples(&source, 64, 64, 1))?;
    let test_set = lift(training_samples(&source, 16, 64, 2))?;
    let mut model = lift(SwinUnet::<f32>::new(
        lift(SwinConfig::variant("swin-unet-test"))?,
        1,
    ))?;
    let cfg = SegTrainConfig {
        epochs: 40,
        tile_size: 64,
        ..SegTrainConfig::default()
    };
    let report = lift(train(&mut model, &train_set, &test_set, &cfg, None))?;

    let world = lift(SynthWorld::generate(&WorldSpec::default()))?;
    ensure(world.lakes.len() == 20 && world.spec.dropout == 0.1, || {
        "unexpected world spec".into()
    })?;
    let models = SegModels {
        flood: &model,
        nonflood: &model,
    };
    let index = lift(RTreeIndex::build(world.reference_lakes()))?;
    let mut matched = Vec::new();
    for e in 0..NUM_EPOCHS {
        let occ = lift(world.occurrence(e))?;
        let mask = lift(infer_epoch(
            &occ,
            e,
            &models,
            &world.rivers,
            &FloodCriterion::default(),
            64,
        ))?;
        let features = vectorize(&mask, &world.rivers, 1000.0);
        let (kept, _) = match_all(features, &index, &world.grid, &MatchParams::default());
        matched.extend(kept);
    }
    let series = build_series(&matched, &world.climate, 3);
    let rec = recovery(&series, &world.truth_areas(), 0.03, 2.0);
    within(t0.elapsed(), 1800, "end-to-end chain")?;
    ensure(rec.lakes == 20 && rec.lakes_recovered == 20, || {
        format!(
            "{} of {} lake identities recovered",
            rec.lakes_recovered, rec.lakes
        )
    })?;
    ensure(rec.fraction_within_tolerance >= 0.9, || {
        format!(
            "{} of {} cells within tolerance ({:.3})",
            rec.cells_within_tolerance, rec.cells, rec.fraction_within_tolerance
        )
    })?;
    Ok(format!(
        "seg MIoU {:.4}; {}/{} lakes; {}/{} cells within max(2 px, 3%) ({:.1}%); {:.1} s",
        report.best_miou,
        rec.lakes_recovered,
        rec.lakes,
        rec.cells_within_tolerance,
        rec.cells,
        100.0 * rec.fraction_within_tolerance,
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 11

/// Every stage of the chain, writing into `dir`.
pub fn run_stages(dir: &Path, seed: u64) -> lakewatch::Result<()> {
    let meta = serde_json::json!({ "seed": seed });
    let spec = WorldSpec {
        seed,
        lakes: 4,
        ..WorldSpec::default()
    };
    let world = SynthWorld::generate(&spec)?;
    world.save(&dir.join("world"), &meta)?;

    let stack = MonthlyStack::load(&dir.join("world/stacks/e03"))?;
    composite(&stack)?.save(&dir.join("occurrence_e03.lkr"), &meta)?;

    let samples = training_samples(&world, 6, 64, seed + 1)?;
    save_dataset(&dir.join("train"), &samples, &meta)?;
    let mut model = SwinUnet::<f32>::new(SwinConfig::variant("swin-unet-test")?, seed)?;
    let cfg = SegTrainConfig {
        epochs: 2,
        tile_size: 64,
        seed,
        ..SegTrainConfig::default()
    };
    let report = train(
        &mut model,
        &samples[..4],
        &samples[4..],
        &cfg,
        Some(&dir.join("best.lkc")),
    )?;
    lakewatch::segtrain::write_log_csv(&dir.join("train_log.csv"), &report.log)?;
    model.save(&dir.join("model.lkc"), meta.clone())?;

    let models = SegModels {
        flood: &model,
        nonflood: &model,
    };
    let index = RTreeIndex::build(world.reference_lakes())?;
    let mut matched = Vec::new();
    for e in [0, 5, 11] {
        let occ = world.occurrence(e)?;
        let mask = infer_epoch(
            &occ,
            e,
            &models,
            &world.rivers,
            &FloodCriterion::default(),
            64,
        )?;
        mask.save(&dir.join(format!("mask_e{e:02}.lkr")), &meta)?;
        let features = vectorize(&mask, &world.rivers, 1000.0);
        write_json(
            &dir.join(format!("lakes_e{e:02}.geojson")),
            &lakes_to_geojson(&features, &meta),
        )?;
        let (kept, _) = match_all(features, &index, &world.grid, &MatchParams::default());
        write_json(
            &dir.join(format!("matched_e{e:02}.geojson")),
            &lakes_to_geojson(&kept, &meta),
        )?;
        matched.extend(kept);
    }
    write_series_csv(
        &dir.join("series.csv"),
        &build_series(&matched, &world.climate, 3),
    )?;

    let series = sinusoid_series(12, seed);
    let stats = FeatureStats::fit(&series)?;
    let fc = ForecastConfig {
        epochs: 3,
        hidden: 16,
        seed,
        ..ForecastConfig::default()
    };
    let windows = build_windows(&series, fc.window_len, &stats)?;
    let mut forecaster = LstmForecaster::<f32>::new(fc, stats)?;
    let curve = train_forecaster(&mut forecaster, &windows[..80], &windows[80..])?;
    write_mse_csv(&dir.join("mse_log.csv"), &curve)?;
    forecaster.save(&dir.join("forecaster.lkc"))?;
    let preds: Vec<_> = series
        .iter()
        .filter_map(|s| predict_next(&forecaster, s).ok())
        .collect();
    write_predictions_csv(&dir.join("predictions.csv"), &preds)?;
    Ok(())
}

pub fn tree_bytes(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn c11_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    lift(run_stages(a.path(), 21))?;
    lift(run_stages(b.path(), 21))?;
    let (ta, tb) = (
        tree_bytes(a.path()).map_err(|e| e.to_string())?,
        tree_bytes(b.path()).map_err(|e| e.to_string())?,
    );
    ensure(ta.len() == tb.len(), || {
        format!("{} vs {} files", ta.len(), tb.len())
    })?;
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        ensure(na == nb, || format!("file sets differ at {na} / {nb}"))?;
        ensure(ba == bb, || format!("{na} differs between runs"))?;
    }
    let bytes: usize = ta.iter().map(|(_, b)| b.len()).sum();
    Ok(format!(
        "{} files ({} bytes) byte-identical across two runs",
        ta.len(),
        bytes
    ))
}
