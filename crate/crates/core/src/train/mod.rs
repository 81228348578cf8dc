//! Supervised fine-tuning: schedule, loss, augmentation, optimizer and the
//! resumable training loop.

mod augment;
mod config;
mod loss;
mod optim;
mod state;
mod trainer;

pub use augment::{augment, flip_h, flip_v, rot90};
pub use config::{lr_at, AugmentFlags, TrainConfig, WarmupCosine};
pub use loss::{bce_loss, bce_pair, BCE_EPS};
pub use optim::Sgd;
pub use state::{RngState, TrainState, STATE_KEY};
pub use trainer::{evaluate_samples, load_split, train_loop, Sample, TrainOptions, BEST_SNAPSHOT, CHECKPOINT_FILE};
