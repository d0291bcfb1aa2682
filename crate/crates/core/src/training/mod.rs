//! Adam with linear warmup, the training loop, its report format, static
//! hard-negative mining and model-level gradient checks.

mod adam;
mod gradcheck;
mod mining;
mod pretrain;
mod report;
mod train;

pub use adam::{lr_schedule, Adam, DEFAULT_BETAS, DEFAULT_EPS};
pub use gradcheck::{check_model_gradients, jitter_trainable, GradCheckOptions, GradCheckReport, FD_STEPS};
pub use mining::mine_hard_negatives;
pub use pretrain::inverse_cloze_examples;
pub use report::{EpochRecord, StepRecord, TrainReport};
pub use train::{default_lr, train, DevSet, TrainConfig, FULL_LR, PET_LR};
