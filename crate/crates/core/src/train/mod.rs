//! Optimization loop, early stopping and the per-epoch log.

pub mod adam;
pub mod early_stop;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use early_stop::{EarlyStopping, Verdict};
pub use trainer::{evaluate, make_batch, predict, train, EpochLog, Monitor, TrainConfig, TrainOutcome};
