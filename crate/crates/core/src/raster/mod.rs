//! Occurrence rasters, compositing, routing, masking and tiled inference.

mod composite;
mod georaster;
mod landmask;
mod routing;
mod tiling;

pub use composite::{composite, MonthlyStack, MONTHS_PER_EPOCH, STACK_MANIFEST};
pub use georaster::{BinaryMask, GeoRaster, GridSpec, EARTH_RADIUS_KM, RASTER_MAGIC};
pub use landmask::{apply_land_mask, LandPolygon};
pub use routing::{
    classify_flood_prone, flood_proportion, river_buffer, width_in_pixels, FloodCriterion, River,
};
pub use tiling::{
    tile_and_infer, EpochMask, ModelKind, SegModels, Segmenter, TileRecord, NUM_EPOCHS,
};
