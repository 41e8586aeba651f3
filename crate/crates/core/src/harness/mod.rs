//! Training and evaluation runs: configuration, checkpoints, metrics and
//! packed export.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod pack;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::{parse_architecture, Mode, RunConfig};
pub use metrics::{EvalMetrics, RunMetrics};
pub use pack::{export_packed, Footprint};
pub use run::{evaluate, load_datasets, train, TrainOutcome};
