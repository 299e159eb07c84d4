//! Training loop, evaluation treatments, checkpoints, and reports.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod pv;
pub mod report;
pub mod trainer;

pub use checkpoint::{Checkpoint, TrainCursor};
pub use config::{KvConfig, TrainConfig};
pub use evaluate::{evaluate, EvalFlags, EvalReport};
pub use pv::{PvAccumulator, Series};
pub use trainer::{train, train_with, MetricsRecord, Phase, TrainEvent, TrainOutput, TrainState};
