//! ADAM with additive L2, a synthetic sequence task and the training loop.

mod adam;
mod harness;
mod task;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use harness::{accuracy, metrics_csv, train, EpochMetrics, History, TrainConfig};
pub use task::{nearest_template, Dataset, SyntheticTask};
