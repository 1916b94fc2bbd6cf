//! Window partitioning, cyclic shifts and attention masks.
//!
//! Token maps are stored as `[B·H·W, C]`, row-major over `(b, row, col)`.
//! Windowed layouts are `[B·nWh·nWw, M², C]`, windows ordered `(b, wr, wc)`
//! and slots row-major inside each window.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::GATHER_ZERO;
use crate::tensor::{Real, Tape, Var};

/// Additive mask value for disallowed token pairs.
pub const MASK_NEG: f64 = -100.0;

/// Geometry of a windowed view of an `h×w` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub h: usize,
    pub w: usize,
    pub window: usize,
    pub shift: usize,
    /// Padded extents (multiples of `window`).
    pub hp: usize,
    pub wp: usize,
}

impl WindowGrid {
    pub fn new(h: usize, w: usize, window: usize, shift: usize) -> Self {
        let hp = h.div_ceil(window) * window;
        let wp = w.div_ceil(window) * window;
        Self {
            h,
            w,
            window,
            shift,
            hp,
            wp,
        }
    }

    pub fn windows_per_image(&self) -> usize {
        (self.hp / self.window) * (self.wp / self.window)
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }

    pub fn is_padded(&self) -> bool {
        self.hp != self.h || self.wp != self.w
    }

    /// Window id and slot of padded-grid position `(r, c)` after the shift.
    pub fn locate(&self, r: usize, c: usize) -> (usize, usize) {
        let m = self.window;
        let rs = (r + self.hp - self.shift % self.hp) % self.hp;
        let cs = (c + self.wp - self.shift % self.wp) % self.wp;
        let win = (rs / m) * (self.wp / m) + cs / m;
        (win, (rs % m) * m + cs % m)
    }

    /// Padded-grid position held by `slot` of window `win` (inverse of `locate`).
    pub fn source(&self, win: usize, slot: usize) -> (usize, usize) {
        let m = self.window;
        let nww = self.wp / m;
        let rs = (win / nww) * m + slot / m;
        let cs = (win % nww) * m + slot % m;
        ((rs + self.shift) % self.hp, (cs + self.shift) % self.wp)
    }

    /// Gather index taking `[B·H·W, C]` to the padded, shifted window layout.
    pub fn partition_index(&self, batch: usize, channels: usize) -> Vec<usize> {
        let nw = self.windows_per_image();
        let n = self.tokens_per_window();
        let mut idx = Vec::with_capacity(batch * nw * n * channels);
        for b in 0..batch {
            for win in 0..nw {
                for slot in 0..n {
                    let (r, c) = self.source(win, slot);
                    if r >= self.h || c >= self.w {
                        idx.extend(std::iter::repeat_n(GATHER_ZERO, channels));
                    } else {
                        let base = ((b * self.h + r) * self.w + c) * channels;
                        idx.extend(base..base + channels);
                    }
                }
            }
        }
        idx
    }

    /// Gather index taking the window layout back to `[B·H·W, C]`, undoing
    /// the shift and dropping padding.
    pub fn reverse_index(&self, batch: usize, channels: usize) -> Vec<usize> {
        let nw = self.windows_per_image();
        let n = self.tokens_per_window();
        let mut idx = Vec::with_capacity(batch * self.h * self.w * channels);
        for b in 0..batch {
            for r in 0..self.h {
                for c in 0..self.w {
                    let (win, slot) = self.locate(r, c);
                    let base = ((b * nw + win) * n + slot) * channels;
                    idx.extend(base..base + channels);
                }
            }
        }
        idx
    }

    /// Per-window `[nW, N, N]` additive mask, or `None` when every pair may
    /// attend. Pairs are blocked when they came from different regions of
    /// the cyclic shift or when the key is a padding token.
    pub fn mask(&self) -> Option<Vec<f64>> {
        if self.shift == 0 && !self.is_padded() {
            return None;
        }
        let m = self.window;
        let band = |x: usize, extent: usize| -> usize {
            if self.shift == 0 || x < extent - m {
                0
            } else if x < extent - self.shift {
                1
            } else {
                2
            }
        };
        let nw = self.windows_per_image();
        let n = self.tokens_per_window();
        let nww = self.wp / m;
        let mut out = vec![0.0; nw * n * n];
        for win in 0..nw {
            let labels: Vec<(usize, bool)> = (0..n)
                .map(|slot| {
                    let rs = (win / nww) * m + slot / m;
                    let cs = (win % nww) * m + slot % m;
                    let (r, c) = self.source(win, slot);
                    (
                        band(rs, self.hp) * 3 + band(cs, self.wp),
                        r >= self.h || c >= self.w,
                    )
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    if labels[i].0 != labels[j].0 || labels[j].1 {
                        out[(win * n + i) * n + j] = MASK_NEG;
                    }
                }
            }
        }
        Some(out)
    }
}

/// Relative-position lookup: table row for every `(i, j)` slot pair.
///
/// The table has `(2M−1)²` rows; pairs sharing `(Δrow, Δcol)` share a row.
pub fn relative_position_index(window: usize) -> Vec<usize> {
    let m = window as isize;
    let n = window * window;
    let span = 2 * m - 1;
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n as isize {
        for j in 0..n as isize {
            let dr = i / m - j / m + m - 1;
            let dc = i % m - j % m + m - 1;
            idx.push((dr * span + dc) as usize);
        }
    }
    idx
}

/// Split a `[B·H·W, C]` map into non-overlapping `M×M` windows.
pub fn window_partition<T: Real>(
    g: &mut Tape<T>,
    tokens: Var,
    batch: usize,
    h: usize,
    w: usize,
    window: usize,
) -> Result<Var> {
    if window == 0 || !h.is_multiple_of(window) || !w.is_multiple_of(window) {
        return Err(Error::dim("window_partition", &[h, w], &[window]));
    }
    let c = channels_of(g, tokens, batch * h * w)?;
    let grid = WindowGrid::new(h, w, window, 0);
    let idx = grid.partition_index(batch, c);
    let nw = batch * grid.windows_per_image();
    g.gather(tokens, idx.into(), vec![nw, window * window, c])
}

/// Inverse of [`window_partition`].
pub fn window_reverse<T: Real>(
    g: &mut Tape<T>,
    windows: Var,
    batch: usize,
    h: usize,
    w: usize,
    window: usize,
) -> Result<Var> {
    if window == 0 || !h.is_multiple_of(window) || !w.is_multiple_of(window) {
        return Err(Error::dim("window_reverse", &[h, w], &[window]));
    }
    let grid = WindowGrid::new(h, w, window, 0);
    let s = g.shape(windows).to_vec();
    let c = *s.last().unwrap_or(&0);
    if g.value(windows).len() != batch * h * w * c {
        return Err(Error::dim("window_reverse", &s, &[batch, h, w]));
    }
    let idx: Arc<[usize]> = grid.reverse_index(batch, c).into();
    g.gather(windows, idx, vec![batch * h * w, c])
}

pub(crate) fn channels_of<T: Real>(g: &Tape<T>, tokens: Var, count: usize) -> Result<usize> {
    let s = g.shape(tokens);
    let len = g.value(tokens).len();
    if count == 0 || !len.is_multiple_of(count) {
        return Err(Error::dim("feature map", s, &[count]));
    }
    Ok(len / count)
}
