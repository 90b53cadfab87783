//! Deep Q-learning: replay buffer, bootstrap targets, the training loop and
//! the trained policy artifact.

mod artifact;
mod config;
mod replay;
mod trainer;

pub use artifact::{Encoder, PolicyArtifact, TrainingMetrics, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::TrainingConfig;
pub use replay::{Experience, ReplayBuffer};
pub use trainer::{masked_max, td_target, train, train_with, LogRow, TrainOptions, TrainingLog, TrainingRun};
