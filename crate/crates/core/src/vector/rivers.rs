use super::contour::LakeFeature;
use crate::geom::{point_in_ring, segments_intersect, BBox};
use crate::raster::River;

/// Rivers wider than this are treated as channel rather than lake.
pub const WIDE_RIVER_M: f64 = 1000.0;

/// Whether a polyline crosses or lies inside a closed ring.
pub fn polyline_hits_ring(line: &[(f64, f64)], ring: &[(f64, f64)]) -> bool {
    if line.iter().any(|&p| point_in_ring(p, ring)) {
        return true;
    }
    let rb = BBox::of_points(ring);
    line.windows(2).any(|s| {
        if !BBox::of_points(s).intersects(&rb) {
            return false;
        }
        ring.windows(2)
            .any(|e| segments_intersect(s[0], s[1], e[0], e[1]))
    })
}

/// Drop features touched by any river wider than `min_width_m`.
pub fn filter_rivers(
    features: Vec<LakeFeature>,
    rivers: &[River],
    min_width_m: f64,
) -> Vec<LakeFeature> {
    let wide: Vec<(&River, BBox)> = rivers
        .iter()
        .filter(|r| r.width_m > min_width_m)
        .map(|r| (r, BBox::of_points(&r.points)))
        .collect();
    features
        .into_iter()
        .filter(|f| {
            let fb = BBox::of_points(&f.ring);
            !wide
                .iter()
                .any(|(r, rb)| rb.intersects(&fb) && polyline_hits_ring(&r.points, &f.ring))
        })
        .collect()
}
