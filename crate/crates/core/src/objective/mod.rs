//! Adversarial and segmentation losses, the alternating training loop,
//! validation-based model selection and checkpoints.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{d_loss, g_gan_loss, g_total, g_total_loss, seg_loss, DEFAULT_EPS};
pub use train::{
    batch_order, discriminator_epoch, fit, generator_epoch, history_csv, select_best, train_round, validation_loss, FitOutcome, RoundStats, TrainConfig, TrainState,
};
