//! Optimizer, schedule, checkpointing and the training loop.

mod adam;
mod checkpoint;
mod eval;
mod schedule;
mod train;

pub use adam::{adam_step, Adam, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use eval::{evaluate, EvalReport, BOOTSTRAP_RESAMPLES, CONFIDENCE};
pub use schedule::{one_cycle_lr, ONE_CYCLE_END_DIV, ONE_CYCLE_START_DIV};
pub use train::{mean_loss, sample_loss, train, write_curve, CurvePoint, LossKind, TrainConfig, TrainReport, Trainable};
