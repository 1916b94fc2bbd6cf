use std::collections::BTreeSet;

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RStarInsertionStrategy, RTree, RTreeParams, AABB};
use serde::{Deserialize, Serialize};

use super::contour::LakeFeature;
use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, point_in_ring, BBox, Point};
use crate::raster::GridSpec;

/// A lake of the reference database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLake {
    pub lake_id: u64,
    /// Outer ring followed by holes.
    pub polygon: Vec<Vec<Point>>,
    pub area_km2: f64,
}

impl ReferenceLake {
    pub fn bbox(&self) -> BBox {
        self.polygon
            .first()
            .map(|r| BBox::of_points(r))
            .unwrap_or_else(BBox::empty)
    }
}

pub struct IndexParams;

impl RTreeParams for IndexParams {
    const MIN_SIZE: usize = 3;
    const MAX_SIZE: usize = 8;
    const REINSERTION_COUNT: usize = 2;
    type DefaultInsertionStrategy = RStarInsertionStrategy;
}

type Entry = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Bounding-box tree over reference lakes.
pub struct RTreeIndex {
    tree: RTree<Entry, IndexParams>,
    lakes: Vec<ReferenceLake>,
}

impl RTreeIndex {
    pub fn build(lakes: Vec<ReferenceLake>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for l in &lakes {
            if !ids.insert(l.lake_id) {
                return Err(Error::Input(format!(
                    "duplicate reference lake_id {}",
                    l.lake_id
                )));
            }
            if l.polygon.is_empty() {
                return Err(Error::Input(format!(
                    "reference lake {} has no ring",
                    l.lake_id
                )));
            }
        }
        let entries = lakes
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let b = l.bbox();
                GeomWithData::new(
                    Rectangle::from_corners([b.min_x, b.min_y], [b.max_x, b.max_y]),
                    i,
                )
            })
            .collect();
        Ok(Self {
            tree: RTree::bulk_load_with_params(entries),
            lakes,
        })
    }

    pub fn lakes(&self) -> &[ReferenceLake] {
        &self.lakes
    }

    pub fn len(&self) -> usize {
        self.lakes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lakes.is_empty()
    }

    /// Lakes whose bounding box intersects `b`, ordered by `lake_id`.
    pub fn query(&self, b: &BBox) -> Vec<&ReferenceLake> {
        let env = AABB::from_corners([b.min_x, b.min_y], [b.max_x, b.max_y]);
        let mut out: Vec<&ReferenceLake> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .map(|e| &self.lakes[e.data])
            .collect();
        out.sort_by_key(|l| l.lake_id);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Minimum share of the feature area the best overlap must reach.
    pub min_overlap: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { min_overlap: 0.30 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOutcome {
    pub lake_id: Option<u64>,
    pub best_id: Option<u64>,
    pub intersection_km2: f64,
}

/// Intersection areas with each candidate, by rasterizing at `grid`
/// resolution: a pixel counts when its center lies inside both the feature
/// ring and the candidate polygon.
pub fn intersection_areas(
    feature: &LakeFeature,
    candidates: &[&ReferenceLake],
    grid: &GridSpec,
) -> Vec<f64> {
    let mut areas = vec![0.0; candidates.len()];
    if candidates.is_empty() {
        return areas;
    }
    let fb = BBox::of_points(&feature.ring);
    let (c0, r0) = grid.to_pixel(fb.min_x, fb.max_y);
    let (c1, r1) = grid.to_pixel(fb.max_x, fb.min_y);
    let clamp = |v: f64, hi: usize| v.floor().max(0.0).min(hi as f64) as usize;
    let (c0, c1) = (clamp(c0, grid.width), clamp(c1 + 1.0, grid.width));
    let (r0, r1) = (clamp(r0, grid.height), clamp(r1 + 1.0, grid.height));
    let boxes: Vec<BBox> = candidates.iter().map(|l| l.bbox()).collect();
    for row in r0..r1 {
        let px_area = grid.pixel_area_km2(row);
        for col in c0..c1 {
            let p = grid.pixel_center(col, row);
            if !point_in_ring(p, &feature.ring) {
                continue;
            }
            for (k, lake) in candidates.iter().enumerate() {
                if boxes[k].contains_point(p) && point_in_polygon(p, &lake.polygon) {
                    areas[k] += px_area;
                }
            }
        }
    }
    areas
}

/// Reference lake with the largest overlap, accepted when the overlap is at
/// least `min_overlap` of the feature's area. Ties go to the smaller id.
pub fn match_identity(
    feature: &LakeFeature,
    index: &RTreeIndex,
    grid: &GridSpec,
    p: &MatchParams,
) -> MatchOutcome {
    let candidates = index.query(&BBox::of_points(&feature.ring));
    let areas = intersection_areas(feature, &candidates, grid);
    let mut best: Option<(u64, f64)> = None;
    for (lake, &a) in candidates.iter().zip(&areas) {
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((lake.lake_id, a));
        }
    }
    let (best_id, inter) = best.map_or((None, 0.0), |(id, a)| (Some(id), a));
    let accepted = inter > 0.0 && inter >= p.min_overlap * feature.area_km2 * (1.0 - 1e-9);
    MatchOutcome {
        lake_id: if accepted { best_id } else { None },
        best_id,
        intersection_km2: inter,
    }
}

/// Assign ids to all features, dropping those without an accepted match.
pub fn match_features(
    features: Vec<LakeFeature>,
    index: &RTreeIndex,
    grid: &GridSpec,
    p: &MatchParams,
) -> (Vec<LakeFeature>, usize) {
    let mut kept = Vec::new();
    let mut discarded = 0;
    for mut f in features {
        match match_identity(&f, index, grid, p).lake_id {
            Some(id) => {
                f.lake_id = Some(id);
                kept.push(f);
            }
            None => discarded += 1,
        }
    }
    (kept, discarded)
}
