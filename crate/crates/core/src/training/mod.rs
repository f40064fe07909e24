//! Weighted two-task loss, augmentation and the optimization loop.

mod augment;
mod loss;
mod optim;
mod train;

pub use augment::{augment, hflip, scale_rotate, AugmentConfig};
pub use loss::{batch_loss_and_grad, loss, loss_and_grad, PixelGrad};
pub use optim::{Adam, AdamConfig};
pub use train::{
    read_epoch_logs, score_dataset, train, write_epoch_logs, DatasetScore, EpochLog, TrainConfig, TrainOutcome, TrainState,
};
