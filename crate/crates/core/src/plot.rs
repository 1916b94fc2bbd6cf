//! Plain SVG charts: training curves, forecaster MSE, the cumulative area
//! timeline and 0.5° grid maps. Output is deterministic text.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::forecast::{cell_origin, GridTable, MseRecord, CELL_DEG};
use crate::segtrain::EpochRecord;
use crate::vector::{epoch_year, LakeSeries};

pub const NODATA_COLOR: &str = "#d9d9d9";
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        w / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut r: Option<(f64, f64)> = None;
    for v in values.filter(|v| v.is_finite()) {
        r = Some(match r {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }
    r.map(|(lo, hi)| {
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    })
}

/// Line chart with point markers, one colour per series.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (Some((x0, x1)), Some((y0, y1))) = (extent(all().map(|p| p.0)), extent(all().map(|p| p.1)))
    else {
        return Err(Error::Input(format!("{title}: nothing to plot")));
    };
    let (pw, ph) = (W - M.0 - M.1, H - M.2 - M.3);
    let sx = |x: f64| M.0 + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| M.2 + ph - (y - y0) / (y1 - y0) * ph;
    let mut out = String::new();
    header(&mut out, W, H, title);
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#444\"/>",
        M.0, M.2
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            sx(xv),
            H - M.3 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            M.0 - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        M.0 + pw / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        M.2 + ph / 2.0,
        M.2 + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline class=\"series\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(
                out,
                "<circle class=\"point\" cx=\"{x}\" cy=\"{y}\" r=\"2.5\" fill=\"{color}\"/>"
            );
        }
        let ly = M.2 + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" text-anchor=\"end\" fill=\"{color}\">{}</text>",
            W - M.1 - 8.0,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Loss curves and MIoU/PA curves of a segmentation run.
pub fn training_curves(log: &[EpochRecord]) -> Result<(String, String)> {
    let pts = |f: fn(&EpochRecord) -> f64| {
        log.iter()
            .map(|r| (r.epoch as f64, f(r)))
            .collect::<Vec<_>>()
    };
    let loss = line_chart(
        "Segmentation loss",
        "epoch",
        "Tversky loss",
        &[
            Series {
                name: "train",
                points: pts(|r| r.train_loss),
            },
            Series {
                name: "test",
                points: pts(|r| r.test_loss),
            },
        ],
    )?;
    let metrics = line_chart(
        "Segmentation metrics",
        "epoch",
        "score",
        &[
            Series {
                name: "MIoU",
                points: pts(|r| r.miou),
            },
            Series {
                name: "PA",
                points: pts(|r| r.pa),
            },
        ],
    )?;
    Ok((loss, metrics))
}

pub fn mse_curves(log: &[MseRecord]) -> Result<String> {
    let pts = |f: fn(&MseRecord) -> f64| {
        log.iter()
            .map(|r| (r.epoch as f64, f(r)))
            .collect::<Vec<_>>()
    };
    line_chart(
        "Forecaster MSE",
        "epoch",
        "MSE (standardized)",
        &[
            Series {
                name: "train",
                points: pts(|r| r.train_mse),
            },
            Series {
                name: "test",
                points: pts(|r| r.test_mse),
            },
        ],
    )
}

/// Summed area over all lakes per epoch; epochs without any value are skipped.
pub fn cumulative_area(series: &[LakeSeries]) -> Vec<(i32, f64)> {
    let n = series.iter().map(|s| s.entries.len()).max().unwrap_or(0);
    (0..n)
        .filter_map(|e| {
            let vals: Vec<f64> = series
                .iter()
                .filter_map(|s| s.entries.get(e).and_then(|x| x.area_km2))
                .collect();
            (!vals.is_empty()).then(|| (epoch_year(e), vals.iter().sum()))
        })
        .collect()
}

pub fn area_timeline(series: &[LakeSeries]) -> Result<String> {
    let points = cumulative_area(series)
        .into_iter()
        .map(|(y, a)| (f64::from(y), a))
        .collect();
    line_chart(
        "Cumulative lake area",
        "year",
        "area (km²)",
        &[Series {
            name: "total",
            points,
        }],
    )
}

fn ramp(t: f64) -> String {
    // white-to-blue ramp
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(239.0, 8.0),
        lerp(243.0, 48.0),
        lerp(255.0, 107.0)
    )
}

/// Which statistic of a cell is mapped to colour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridValue {
    Count,
    Mean,
}

impl GridValue {
    fn of(self, c: &crate::forecast::CellStat) -> f64 {
        match self {
            GridValue::Count => c.count as f64,
            GridValue::Mean => c.mean(),
        }
    }
}

/// Choropleth over the bounding box of occupied cells. Cells without
/// records are drawn in [`NODATA_COLOR`].
pub fn grid_map(table: &GridTable, title: &str, value: GridValue) -> Result<String> {
    let (Some(ix), Some(iy)) = (
        extent(table.keys().map(|k| k.0 as f64)),
        extent(table.keys().map(|k| k.1 as f64)),
    ) else {
        return Err(Error::Input(format!("{title}: no grid cells")));
    };
    let (ix0, ix1) = (ix.0.ceil() as i64, ix.1.floor() as i64);
    let (iy0, iy1) = (iy.0.ceil() as i64, iy.1.floor() as i64);
    let (ix0, ix1, iy0, iy1) = if table.len() == 1 {
        let k = *table.keys().next().expect("one cell");
        (k.0, k.0, k.1, k.1)
    } else {
        (ix0, ix1, iy0, iy1)
    };
    let (ncol, nrow) = ((ix1 - ix0 + 1) as f64, (iy1 - iy0 + 1) as f64);
    let cell = ((W - M.0 - M.1 - 80.0) / ncol)
        .min((H - M.2 - M.3) / nrow)
        .max(2.0);
    let (w, h) = (M.0 + M.1 + 80.0 + cell * ncol, M.2 + M.3 + cell * nrow);
    let (lo, hi) = extent(table.values().map(|c| value.of(c))).unwrap_or((0.0, 1.0));
    let mut out = String::new();
    header(&mut out, w, h, title);
    for iy in (iy0..=iy1).rev() {
        for ix in ix0..=ix1 {
            let x = M.0 + (ix - ix0) as f64 * cell;
            let y = M.2 + (iy1 - iy) as f64 * cell;
            let (lon, lat) = cell_origin((ix, iy));
            let (fill, value) = match table.get(&(ix, iy)) {
                Some(c) => (
                    ramp((value.of(c) - lo) / (hi - lo)),
                    format!("{:.6}", value.of(c)),
                ),
                None => (NODATA_COLOR.to_string(), "nodata".to_string()),
            };
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{fill}\" data-lon=\"{lon:.1}\" data-lat=\"{lat:.1}\" data-value=\"{value}\"/>"
            );
        }
    }
    let (lon0, lat0) = cell_origin((ix0, iy0));
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">lon {:.1}–{:.1}</text>",
        M.0 + cell * ncol / 2.0,
        h - 16.0,
        lon0,
        lon0 + ncol * CELL_DEG
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">lat {:.1}–{:.1}</text>",
        M.2 + cell * nrow / 2.0,
        M.2 + cell * nrow / 2.0,
        lat0,
        lat0 + nrow * CELL_DEG
    );
    let lx = M.0 + cell * ncol + 20.0;
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let y = M.2 + (1.0 - t) * 120.0;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.1}\" y=\"{y:.1}\" width=\"14\" height=\"14\" fill=\"{}\"/>",
            ramp(t)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            lx + 18.0,
            y + 11.0,
            tick(lo + t * (hi - lo))
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"14\" height=\"14\" fill=\"{NODATA_COLOR}\"/><text x=\"{:.1}\" y=\"{:.1}\">no data</text>",
        M.2 + 144.0,
        lx + 18.0,
        M.2 + 155.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}
