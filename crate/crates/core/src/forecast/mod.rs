//! Stacked-LSTM forecasting of lake area from biennial area and climate.

mod grid;
mod lstm;
mod model;
mod predict;
mod stratify;
mod windows;

pub use grid::{
    aggregate, cell_index, cell_origin, read_grid_csv, write_grid_csv, CellStat, GridTable,
    CELL_DEG,
};
pub use lstm::LstmLayer;
pub use model::{
    mse_of, read_mse_csv, train_forecaster, write_mse_csv, ForecastConfig, LstmForecaster,
    MseRecord,
};
pub use predict::{
    hindcast, predict_next, read_predictions_csv, write_predictions_csv, Prediction,
};
pub use stratify::{
    bin_of, mean_area, stratified_split, within_area_range, Stratification, AREA_MAX_KM2,
    AREA_MIN_KM2, NUM_BINS,
};
pub use windows::{
    build_windows, raw_features, usable_runs, FeatureStats, Features, WindowSample, NUM_FEATURES,
};
