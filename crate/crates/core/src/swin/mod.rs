//! Swin-Unet semantic segmentation network.

pub mod attention;
pub mod block;
pub mod config;
pub mod model;
pub mod window;

pub use attention::WindowAttention;
pub use block::{swin_block_pair, FeatureMap, PatchExpand, PatchMerge, SwinBlock, SwinStage};
pub use config::SwinConfig;
pub use model::{PatchEmbed, SwinUnet};
pub use window::{relative_position_index, window_partition, window_reverse, WindowGrid, MASK_NEG};
