//! Image ingestion, preprocessing, augmentation, FOV masks, dataset splits
//! and synthetic data.

mod augment;
mod dataset;
mod fov;
mod netpbm;
mod normalize;
mod sample;
mod split;
mod synthetic;

pub(crate) use dataset::list_by_stem;
pub use augment::{augment, Transform};
pub use dataset::{binarize, crop_to, load_dataset, load_gold, load_mask, load_split_dir, pad_mask, pad_sample, pad_sample_to, pad_to_multiple, pad_to_size, Padding};
pub use fov::{component_count, generate_fov_mask, DEFAULT_LUMINANCE_THRESHOLD};
pub use netpbm::{load_image, write_image, Image};
pub use normalize::zscore_normalize;
pub use sample::{Mask, Sample};
pub use split::{make_split, train_val_split, validation_count, DatasetKind, SplitPlan, STARE_TRAIN_COUNT};
pub use synthetic::{generate_synthetic_sample, synthetic_image};
