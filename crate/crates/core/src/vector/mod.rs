//! Mask vectorization, river filtering, identity matching and biennial
//! series assembly.

mod contour;
pub mod geojson;
mod matching;
mod rivers;
mod series;

pub use contour::{
    contours_of, epoch_year, extract_contours, label_components, trace_outer, year_epoch,
    LakeFeature, FIRST_EPOCH_YEAR,
};
pub use matching::{
    intersection_areas, match_features, match_identity, MatchOutcome, MatchParams, RTreeIndex,
    ReferenceLake,
};
pub use rivers::{filter_rivers, polyline_hits_ring, WIDE_RIVER_M};
pub use series::{
    assemble_series, interpolate_gaps, read_climate_csv, read_series_csv, write_climate_csv,
    write_series_csv, Climate, ClimateTable, LakeSeries, SeriesEntry, Status, MAX_INTERPOLATED_RUN,
};
