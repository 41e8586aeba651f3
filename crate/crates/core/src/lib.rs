//! Single-spike temporal-coded spiking networks trained with layer-local
//! spike-time displacement.
//!
//! Start with [`harness::RunConfig`] and [`harness::train`] for whole runs, or
//! use the layer-level pieces in [`layers`] and [`learning`] directly.

pub mod binary;
pub mod data;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod harness;
pub mod layers;
pub mod learning;
pub mod raster;
pub mod verify;

pub use binary::{AlphaGranularity, BinaryState};
pub use data::{Dataset, Split};
pub use dynamics::NeuronParams;
pub use encoding::EncodingConfig;
pub use error::{Error, Result};
pub use harness::{Checkpoint, Mode, RunConfig};
pub use layers::{Layer, LayerKind, LayerSpec, LayerState, Network};
pub use learning::{TargetTimes, TrainConfig};
pub use raster::{Shape, SpikeRaster};
