//! Adversarial resampling of search patches: direct downsampling followed by
//! a learnable super-resolution pyramid.

pub mod pyramid;
pub mod sru;

pub use pyramid::{
    adaptive_pyramid_levels, align_for_pyramid, did_downsample, down_up, raw_pyramid_levels, restore,
    RestoreRecipe, MAX_LEVELS,
};
pub use sru::{attack_levels, attack_patch, sru_forward, PyramidConfig, Rse, RseBlock, SruNetwork};
