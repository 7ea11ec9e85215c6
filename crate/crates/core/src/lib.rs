//! Tempo and key estimation from spectrograms with small convolutional
//! networks whose filters are either directional (1×n, n×1) or square.

pub mod augment;
pub mod data;
pub mod evalmod;
pub mod dsp;
mod error;
pub mod grid;
pub mod labels;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use grid::Grid;
pub use labels::{KeyLabel, KeyMode, Label, Task};
pub use model::{Arch, Model, ModelConfig, TaskConfig};
