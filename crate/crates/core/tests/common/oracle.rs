//! Straightforward loop implementations used as references.

use std::collections::VecDeque;

use lakewatch::forecast::LstmLayer;
use lakewatch::raster::{BinaryMask, GeoRaster, MonthlyStack};
use lakewatch::swin::{SwinBlock, WindowAttention};
use lakewatch::tensor::ParamStore;

fn param(store: &ParamStore<f64>, id: lakewatch::tensor::ParamId) -> &[f64] {
    store.value(id).data()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x·W + b` for a row-major `[rows, din]` input and `[din, dout]` weight.
pub fn affine(
    x: &[f64],
    rows: usize,
    w: &[f64],
    b: Option<&[f64]>,
    din: usize,
    dout: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..din {
                acc += x[r * din + i] * w[i * dout + o];
            }
            y[r * dout + o] = acc;
        }
    }
    y
}

pub fn layer_norm_rows(x: &[f64], c: usize, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(c).zip(out.chunks_mut(c)) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for k in 0..c {
            o[k] = (row[k] - mean) * inv * gamma[k] + beta[k];
        }
    }
    out
}

/// Dense per-window, per-head evaluation of
/// `SoftMax(Q·Kᵀ/√d + B + mask)·V` followed by the output projection.
///
/// `x` is `[nWin, M², C]`; `mask`, when given, is `[nW, M², M²]` and window
/// `k` uses block `k mod nW`.
pub fn dense_window_attention(
    att: &WindowAttention,
    store: &ParamStore<f64>,
    x: &[f64],
    mask: Option<&[f64]>,
) -> Vec<f64> {
    let m = att.window;
    let n = m * m;
    let c = att.dim;
    let heads = att.heads;
    let d = c / heads;
    let nwin = x.len() / (n * c);
    let qkv_w = param(store, att.qkv.weight);
    let qkv_b = att.qkv.bias.map(|b| param(store, b));
    let table = param(store, att.bias_table);
    let span = 2 * m - 1;
    let mut merged = vec![0.0; nwin * n * c];
    for win in 0..nwin {
        let xw = &x[win * n * c..(win + 1) * n * c];
        let qkv = affine(xw, n, qkv_w, qkv_b, c, 3 * c);
        for h in 0..heads {
            let q = |i: usize, j: usize| qkv[i * 3 * c + h * d + j];
            let k = |i: usize, j: usize| qkv[i * 3 * c + c + h * d + j];
            let v = |i: usize, j: usize| qkv[i * 3 * c + 2 * c + h * d + j];
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for (j, s) in scores.iter_mut().enumerate() {
                    let dot: f64 = (0..d).map(|t| q(i, t) * k(j, t)).sum();
                    let dr = (i / m) as isize - (j / m) as isize + m as isize - 1;
                    let dc = (i % m) as isize - (j % m) as isize + m as isize - 1;
                    let bias = table[(dr as usize * span + dc as usize) * heads + h];
                    *s = dot / (d as f64).sqrt() + bias;
                    if let Some(mask) = mask {
                        let nw = mask.len() / (n * n);
                        *s += mask[((win % nw) * n + i) * n + j];
                    }
                }
                let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                let z: f64 = e.iter().sum();
                for t in 0..d {
                    let acc: f64 = (0..n).map(|j| e[j] / z * v(j, t)).sum();
                    merged[(win * n + i) * c + h * d + t] = acc;
                }
            }
        }
    }
    let pw = param(store, att.proj.weight);
    let pb = att.proj.bias.map(|b| param(store, b));
    affine(&merged, nwin * n, pw, pb, c, c)
}

/// The attention half of a block, `z + (S)W-MSA(LN(z))`, computed on an
/// explicitly zero-padded and cyclically rolled copy of one `h×w×C` map.
///
/// A key may be attended when it is a real (unpadded) token and lies within
/// `M−1` rows and columns of the query in the unrolled padded map, which is
/// exactly the set of pairs that were neighbours before the roll.
pub fn shifted_attention_oracle(
    block: &SwinBlock,
    store: &ParamStore<f64>,
    z: &[f64],
    h: usize,
    w: usize,
) -> Vec<f64> {
    let att = &block.attn;
    let m = block.window;
    let c = att.dim;
    let grid = block.grid(h, w);
    let shift = grid.shift;
    let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let ln = layer_norm_rows(
        z,
        c,
        param(store, block.norm1.gamma),
        param(store, block.norm1.beta),
    );

    let mut padded = vec![0.0; hp * wp * c];
    for r in 0..h {
        for col in 0..w {
            let src = (r * w + col) * c;
            padded[(r * wp + col) * c..(r * wp + col + 1) * c].copy_from_slice(&ln[src..src + c]);
        }
    }
    // rolled[r][c] = padded[(r + s) % hp][(c + s) % wp]
    let origin = |r: usize, col: usize| ((r + shift) % hp, (col + shift) % wp);
    let (nwh, nww) = (hp / m, wp / m);
    let n = m * m;
    let nwin = nwh * nww;
    let mut windows = vec![0.0; nwin * n * c];
    let mut coords = vec![(0usize, 0usize); nwin * n];
    for wr in 0..nwh {
        for wc in 0..nww {
            for slot in 0..n {
                let (r, col) = (wr * m + slot / m, wc * m + slot % m);
                let (or, oc) = origin(r, col);
                let win = wr * nww + wc;
                coords[win * n + slot] = (or, oc);
                let src = (or * wp + oc) * c;
                windows[(win * n + slot) * c..(win * n + slot + 1) * c]
                    .copy_from_slice(&padded[src..src + c]);
            }
        }
    }
    let mut mask = vec![0.0; nwin * n * n];
    for win in 0..nwin {
        for i in 0..n {
            for j in 0..n {
                let (ri, ci) = coords[win * n + i];
                let (rj, cj) = coords[win * n + j];
                let near = ri.abs_diff(rj) < m && ci.abs_diff(cj) < m;
                let real = rj < h && cj < w;
                if !(near && real) {
                    mask[(win * n + i) * n + j] = f64::NEG_INFINITY;
                }
            }
        }
    }
    let attended = dense_window_attention(att, store, &windows, Some(&mask));
    let mut out = z.to_vec();
    for win in 0..nwin {
        for slot in 0..n {
            let (or, oc) = coords[win * n + slot];
            if or < h && oc < w {
                let dst = (or * w + oc) * c;
                for k in 0..c {
                    out[dst + k] += attended[(win * n + slot) * c + k];
                }
            }
        }
    }
    out
}

/// One LSTM step by scalar loops; inputs are `[B, in]`, `[B, hid]`, `[B, hid]`.
pub fn lstm_cell(
    layer: &LstmLayer,
    store: &ParamStore<f64>,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (din, hid) = (layer.input, layer.hidden);
    let batch = h.len() / hid;
    let (mut h_out, mut c_out) = (vec![0.0; batch * hid], vec![0.0; batch * hid]);
    for b in 0..batch {
        let z: Vec<f64> = x[b * din..(b + 1) * din]
            .iter()
            .chain(&h[b * hid..(b + 1) * hid])
            .copied()
            .collect();
        let gate = |w, bias| -> Vec<f64> {
            let w = param(store, w);
            let bias = param(store, bias);
            (0..hid)
                .map(|k| bias[k] + (0..din + hid).map(|i| z[i] * w[i * hid + k]).sum::<f64>())
                .collect()
        };
        let f = gate(layer.w_f, layer.b_f);
        let i = gate(layer.w_i, layer.b_i);
        let o = gate(layer.w_o, layer.b_o);
        let cand = gate(layer.w_c, layer.b_c);
        for k in 0..hid {
            let ct = sigmoid(f[k]) * c[b * hid + k] + sigmoid(i[k]) * cand[k].tanh();
            c_out[b * hid + k] = ct;
            h_out[b * hid + k] = sigmoid(o[k]) * ct.tanh();
        }
    }
    (h_out, c_out)
}

/// `(tp, tn, fp, fn)` with lake as the positive class.
pub fn confusion(pred: &[u8], truth: &[u8]) -> (u64, u64, u64, u64) {
    let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
    for k in 0..pred.len() {
        let p = pred[k] != 0;
        let t = truth[k] != 0;
        if p && t {
            tp += 1;
        } else if !p && !t {
            tn += 1;
        } else if p {
            fp += 1;
        } else {
            fneg += 1;
        }
    }
    (tp, tn, fp, fneg)
}

/// Water count over valid count per pixel; `None` where never observed.
pub fn occurrence(stack: &MonthlyStack) -> Vec<Option<(u32, u32)>> {
    let n = stack.layers[0].data.len();
    (0..n)
        .map(|i| {
            let mut valid = 0;
            let mut water = 0;
            for l in &stack.layers {
                if !l.nodata[i] {
                    valid += 1;
                    if l.data[i] == 1.0 {
                        water += 1;
                    }
                }
            }
            (valid > 0).then_some((water, valid))
        })
        .collect()
}

/// Flood decision recomputed pixel by pixel.
pub fn flood_prone(tile: &GeoRaster, buffer: &BinaryMask, cutoff: f64, threshold: f64) -> bool {
    let mut wet = 0usize;
    let mut seasonal = 0usize;
    for row in 0..tile.height() {
        for col in 0..tile.width() {
            if !buffer.get(col, row) {
                continue;
            }
            let Some(v) = tile.get(col, row) else {
                continue;
            };
            if v > 0.0 {
                wet += 1;
                if (v as f64) < cutoff {
                    seasonal += 1;
                }
            }
        }
    }
    wet > 0 && seasonal as f64 > threshold * wet as f64
}

/// 8-connected components as lists of pixel indices, in scan order.
pub fn components(mask: &BinaryMask) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask.data[q] != 0 && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// A component with its holes filled: every pixel not reachable from
/// outside the raster through 4-connected background.
pub fn filled(comp: &[usize], w: usize, h: usize) -> Vec<bool> {
    let (pw, ph) = (w + 2, h + 2);
    let mut wall = vec![false; pw * ph];
    for &p in comp {
        wall[(p / w + 1) * pw + p % w + 1] = true;
    }
    let mut outside = vec![false; pw * ph];
    let mut queue = VecDeque::from([0usize]);
    outside[0] = true;
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % pw, p / pw);
        let mut push = |q: usize| {
            if !wall[q] && !outside[q] {
                outside[q] = true;
                queue.push_back(q);
            }
        };
        if x > 0 {
            push(p - 1);
        }
        if x + 1 < pw {
            push(p + 1);
        }
        if y > 0 {
            push(p - pw);
        }
        if y + 1 < ph {
            push(p + pw);
        }
    }
    (0..w * h)
        .map(|p| !outside[(p / w + 1) * pw + p % w + 1])
        .collect()
}
