//! Lake dynamics toolkit: occurrence compositing, windowed-attention
//! segmentation, lake vectorization with identity tracking, and LSTM area
//! forecasting.

pub mod config;
pub mod error;
pub mod forecast;
pub mod geom;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod raster;
pub mod segtrain;
pub mod swin;
pub mod synth;
pub mod tensor;
pub mod vector;

pub use error::{Error, Result};
