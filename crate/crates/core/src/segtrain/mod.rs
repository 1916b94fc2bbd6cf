//! Segmentation training: Tversky loss, PA/MIoU metrics, augmentation,
//! dataset splitting and the epoch loop.

mod augment;
mod dataset;
pub mod infer;
mod loss;
mod metrics;
mod train;

pub use augment::{augment, standardize, STD_EPS};
pub use dataset::{load_dataset, save_dataset, split_dataset, Sample, DATASET_MANIFEST};
pub use loss::{dice_score, tversky_loss, TverskyParams};
pub use metrics::ConfusionCounts;
pub use train::{
    evaluate, read_log_csv, train, tversky_value, write_log_csv, EpochRecord, SegTrainConfig,
    TrainReport,
};
