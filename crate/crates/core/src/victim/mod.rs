//! The victim side: a trainable toy Siamese tracker and the adapter contract.

pub mod adapter;
pub mod crop;
pub mod decode;
pub mod maps;
pub mod pretrain;
pub mod tracker;

pub use adapter::{init_template, respond, track_step, SiameseTracker, Template, TrackerRegistry};
pub use crop::{context_side, crop_search_patch, crop_square};
pub use decode::{best_cell, decode_box};
pub use maps::{RegressionMap, ScoreMap, TrackerOutput};
pub use tracker::{ToyTracker, VictimConfig};
