//! Resampling-based adversarial attacks on Siamese visual trackers.
//!
//! The crate bundles everything needed to study the attack at desk scale:
//!
//! * [`resample`]: direct downsampling plus a pyramid super-resolution
//!   network whose residuals carry the adversarial signal, with the pyramid
//!   depth chosen from the target's share of the frame;
//! * [`victim`]: a small trainable Siamese tracker and an adapter trait for
//!   plugging in other trackers;
//! * [`losses`]: score-reversal, box-drift and perceptibility objectives;
//! * [`training`]: generator training against a frozen victim;
//! * [`evaluation`]: one-pass evaluation, precision/success metrics,
//!   ablation modes and attention heatmaps;
//! * [`synth`] / [`dataset`]: procedural sequences and the on-disk sequence format.
//!
//! Everything runs on the CPU through a small reverse-mode [`autograd`] tape.

pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod nn;
pub mod resample;
pub mod synth;
pub mod tensor;
pub mod training;
pub mod victim;

pub use error::{Error, Result};
pub use geometry::{BBox, SearchGeometry};
pub use image::Image;
pub use tensor::Tensor;
