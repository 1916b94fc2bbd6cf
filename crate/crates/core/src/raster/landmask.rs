use super::georaster::GeoRaster;
use crate::error::Result;
use crate::geom::{point_in_polygon, require_closed, BBox, Point};

/// A land polygon: outer ring followed by any holes, lon/lat.
pub type LandPolygon = Vec<Vec<Point>>;

/// Mark as nodata every pixel whose center lies in no land polygon.
pub fn apply_land_mask(raster: &GeoRaster, polygons: &[LandPolygon]) -> Result<GeoRaster> {
    for poly in polygons {
        for ring in poly {
            require_closed(ring)?;
        }
    }
    let boxes: Vec<BBox> = polygons
        .iter()
        .map(|p| {
            p.first()
                .map(|r| BBox::of_points(r))
                .unwrap_or_else(BBox::empty)
        })
        .collect();
    let mut out = raster.clone();
    for row in 0..raster.height() {
        for col in 0..raster.width() {
            let c = raster.grid.pixel_center(col, row);
            let on_land = polygons
                .iter()
                .zip(&boxes)
                .any(|(p, b)| b.contains_point(c) && point_in_polygon(c, p));
            if !on_land {
                let i = raster.idx(col, row);
                out.set_nodata(i);
            }
        }
    }
    Ok(out)
}
