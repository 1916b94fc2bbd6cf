use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::raster::{BinaryMask, EpochMask, GridSpec};

/// One lake outline at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LakeFeature {
    pub epoch: usize,
    /// Closed, counter-clockwise exterior ring in lon/lat.
    pub ring: Vec<Point>,
    pub pixel_count: usize,
    pub area_km2: f64,
    pub lake_id: Option<u64>,
}

/// First biennial epoch ends in this year.
pub const FIRST_EPOCH_YEAR: i32 = 1991;

pub fn epoch_year(epoch: usize) -> i32 {
    FIRST_EPOCH_YEAR + 2 * epoch as i32
}

pub fn year_epoch(year: i32) -> Option<usize> {
    let d = year - FIRST_EPOCH_YEAR;
    (d >= 0 && d % 2 == 0).then_some((d / 2) as usize)
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster-scan order of their first pixel) and the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (c, r) = ((i % w) as isize, (i / w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= w as isize || nr >= h as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.data[j] != 0 && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Outer boundary of component `id`, as pixel-corner coordinates, starting
/// at the top-left corner of pixel `first` (the component's first pixel in
/// scan order) and keeping only turning points.
///
/// The walk keeps the component on its right (clockwise with rows growing
/// downward, hence clockwise in lon/lat too) and at
/// diagonal pinch points turns left, so diagonally touching pixels stay in
/// one ring.
pub fn trace_outer(
    labels: &[u32],
    width: usize,
    height: usize,
    id: u32,
    first: usize,
) -> Vec<(usize, usize)> {
    let inside = |x: isize, y: isize| -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < width
            && (y as usize) < height
            && labels[y as usize * width + x as usize] == id
    };
    let (sx, sy) = ((first % width) as isize, (first / width) as isize);
    let (mut x, mut y) = (sx + 1, sy);
    let (mut dx, mut dy) = (1isize, 0isize);
    let mut out = vec![(sx as usize, sy as usize)];
    loop {
        if (x, y) == (sx, sy) {
            break;
        }
        // front-left / front-right pixels relative to heading at vertex (x, y)
        let (fl, fr) = match (dx, dy) {
            (1, 0) => ((x, y - 1), (x, y)),
            (0, 1) => ((x, y), (x - 1, y)),
            (-1, 0) => ((x - 1, y), (x - 1, y - 1)),
            _ => ((x - 1, y - 1), (x, y - 1)),
        };
        let (ndx, ndy) = if inside(fl.0, fl.1) {
            (dy, -dx)
        } else if inside(fr.0, fr.1) {
            (dx, dy)
        } else {
            (-dy, dx)
        };
        if (ndx, ndy) != (dx, dy) {
            out.push((x as usize, y as usize));
        }
        (dx, dy) = (ndx, ndy);
        x += dx;
        y += dy;
    }
    out.push((sx as usize, sy as usize));
    out
}

/// Outer contours of every 8-connected lake component; holes are ignored.
pub fn extract_contours(mask: &EpochMask) -> Vec<LakeFeature> {
    contours_of(&mask.mask, &mask.grid, mask.epoch)
}

pub fn contours_of(mask: &BinaryMask, grid: &GridSpec, epoch: usize) -> Vec<LakeFeature> {
    let (labels, n) = label_components(mask);
    let w = mask.width;
    let mut first = vec![usize::MAX; n];
    let mut count = vec![0usize; n];
    let mut area = vec![0.0f64; n];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = l as usize - 1;
        if first[k] == usize::MAX {
            first[k] = i;
        }
        count[k] += 1;
        area[k] += grid.pixel_area_km2(i / w);
    }
    (0..n)
        .map(|k| {
            let corners = trace_outer(&labels, w, mask.height, k as u32 + 1, first[k]);
            LakeFeature {
                epoch,
                ring: corners
                    .iter()
                    .rev()
                    .map(|&(x, y)| grid.corner(x, y))
                    .collect(),
                pixel_count: count[k],
                area_km2: area[k],
                lake_id: None,
            }
        })
        .collect()
}
