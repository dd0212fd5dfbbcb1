//! Monocular visual odometry with a recurrent convolutional network.
//!
//! Modules, from the bottom up: [`tensor`] (reverse-mode autodiff),
//! [`geometry`] (SE(3) and Euler angles), [`network`] (encoder, stacked LSTM,
//! pose head), [`kitti`] (dataset I/O), [`training`], [`evaluation`]
//! (KITTI drift metrics), plus the [`synth`] fixture generator.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod kitti;
pub mod network;
pub mod plot;
pub mod synth;
pub mod tensor;
pub mod training;

pub use nalgebra;

pub use config::KeyValues;
pub use error::{Error, Result};
pub use evaluation::{EvalReport, Trajectory};
pub use geometry::{Pose6, PoseSE3};
pub use kitti::{MeanRgb, Segment, SequenceDataset};
pub use network::VoModel;
pub use tensor::{Gradients, Graph, Rng, Tensor, Var};
pub use training::{TrainConfig, TrainLog};
