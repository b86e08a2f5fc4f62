//! The learnable pyramid super-resolution network that carries the attack.
//!
//! Each level runs a feature branch (optional residual spatial-enhancement
//! block, `d` convolutions, a ×2 transposed convolution) and an image branch
//! (bilinear ×2). A 3-channel projection of the upsampled features is added
//! to the upsampled image; the upsampled features feed the next level.
//! Residual projections start at zero, so an untrained network reproduces
//! plain bilinear down-up resampling exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pyramid::{self, aligned_len, MAX_LEVELS};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::SearchGeometry;
use crate::image::Image;
use crate::nn::{Conv, ConvSpec, Init, ParamStore, Upsample2x};
use crate::tensor::Tensor;

const LEAK: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidConfig {
    /// Number of level parameter sets; the deepest pyramid this network can run.
    pub levels: usize,
    pub convs_per_block: usize,
    pub feature_channels: usize,
    pub group_count: usize,
    /// Kernel of the spatial-attention convolution inside the RSE block.
    pub attention_kernel: usize,
    /// Whether each level starts with an RSE block.
    pub rse: bool,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            levels: MAX_LEVELS,
            convs_per_block: 4,
            feature_channels: 32,
            group_count: 4,
            attention_kernel: 7,
            rse: true,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            return Err(Error::config(format!("pyramid levels must be in 1..={MAX_LEVELS}")));
        }
        if self.convs_per_block == 0 || self.feature_channels == 0 || self.group_count == 0 {
            return Err(Error::config("pyramid block sizes must be positive"));
        }
        if self.feature_channels % self.group_count != 0 {
            return Err(Error::config("feature_channels must be divisible by group_count"));
        }
        if self.attention_kernel % 2 == 0 {
            return Err(Error::config("attention_kernel must be odd"));
        }
        Ok(())
    }
}

/// Residual spatial enhancement:
/// `x + relu(conv1x1(spatial_gate(group_conv(x))))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RseBlock {
    pub group: Conv,
    pub attention: Conv,
    pub project: Conv,
    pub channels: usize,
}

impl RseBlock {
    pub fn build(store: &mut ParamStore, name: &str, channels: usize, groups: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            group: Conv::build(store, &format!("{name}.group"), ConvSpec::new(channels, channels, 3).groups(groups), rng),
            attention: Conv::build(store, &format!("{name}.attention"), ConvSpec::new(2, 1, kernel), rng),
            project: Conv::build(store, &format!("{name}.project"), ConvSpec::new(channels, channels, 1), rng),
            channels,
        }
    }

    /// Returns `(output, spatial gate)`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> (Var, Var) {
        let g = self.group.forward(tape, vars, x);
        let pooled = tape.channel_pool(g);
        let logits = self.attention.forward(tape, vars, pooled);
        let gate = tape.sigmoid(logits);
        let enhanced = tape.gate(g, gate);
        let p = self.project.forward(tape, vars, enhanced);
        let branch = tape.relu(p);
        (tape.add(branch, x), gate)
    }
}

/// A standalone RSE block with its own parameters.
#[derive(Clone, Debug)]
pub struct Rse {
    pub params: ParamStore,
    pub block: RseBlock,
}

impl Rse {
    pub fn new(channels: usize, groups: usize, kernel: usize, seed: u64) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::config("channels must be divisible by groups"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let block = RseBlock::build(&mut params, "rse", channels, groups, kernel, &mut rng);
        Ok(Self { params, block })
    }

    /// Zeroes the final 1×1 projection of the non-identity branch.
    pub fn zero_projection(&mut self) {
        self.block.project.zero(&mut self.params);
    }

    fn run(&self, features: &Tensor) -> Result<(Tensor, Tensor)> {
        match features.shape() {
            [c, h, w] if *c == self.block.channels && *h > 0 && *w > 0 => {}
            s => {
                return Err(Error::invalid(format!(
                    "RSE expects {}×H×W features, got {s:?}",
                    self.block.channels
                )))
            }
        }
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let x = tape.constant(features.clone());
        let (y, gate) = self.block.forward(&mut tape, &vars, x);
        Ok((tape.value(y).clone(), tape.value(gate).clone()))
    }

    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        self.run(features).map(|(y, _)| y)
    }

    /// The `1×H×W` spatial-attention gate for `features`.
    pub fn attention_gate(&self, features: &Tensor) -> Result<Tensor> {
        self.run(features).map(|(_, g)| g)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Level {
    rse: Option<RseBlock>,
    convs: Vec<Conv>,
    up: Upsample2x,
    residual: Conv,
}

/// Pyramid super-resolution generator with independent parameters per level.
#[derive(Clone, Debug, PartialEq)]
pub struct SruNetwork {
    config: PyramidConfig,
    params: ParamStore,
    stem: Conv,
    levels: Vec<Level>,
}

impl SruNetwork {
    pub fn new(config: PyramidConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let c = config.feature_channels;
        let stem = Conv::build(&mut params, "stem", ConvSpec::new(3, c, 3), &mut rng);
        let levels = (0..config.levels)
            .map(|k| {
                let name = format!("level{k}");
                let rse = config.rse.then(|| {
                    RseBlock::build(&mut params, &format!("{name}.rse"), c, config.group_count, config.attention_kernel, &mut rng)
                });
                let convs = (0..config.convs_per_block)
                    .map(|i| Conv::build(&mut params, &format!("{name}.conv{i}"), ConvSpec::new(c, c, 3), &mut rng))
                    .collect();
                let up = Upsample2x::build(&mut params, &format!("{name}.up"), c, c, &mut rng);
                let residual = Conv::build(
                    &mut params,
                    &format!("{name}.residual"),
                    ConvSpec::new(c, 3, 3).init(Init::Zero),
                    &mut rng,
                );
                Level { rse, convs, up, residual }
            })
            .collect();
        Ok(Self {
            config,
            params,
            stem,
            levels,
        })
    }

    pub fn config(&self) -> &PyramidConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameters; names and shapes must match this architecture.
    pub fn load_params(&mut self, params: ParamStore) -> Result<()> {
        let same = params.names() == self.params.names()
            && params
                .tensors()
                .iter()
                .zip(self.params.tensors())
                .all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(Error::invalid("parameter set does not match the network architecture"));
        }
        self.params = params;
        Ok(())
    }

    /// Zeroes every residual-image projection, turning the network into down-up resampling.
    pub fn zero_residuals(&mut self) {
        for level in &self.levels {
            level.residual.zero(&mut self.params);
        }
    }

    /// Number of levels actually run for a requested depth.
    pub fn usable_levels(&self, requested: usize) -> usize {
        requested.clamp(1, self.config.levels)
    }

    /// Runs the pyramid on a low-resolution image variable. Output is clamped to `[0,1]`.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], lr: Var, levels: usize) -> Result<Var> {
        if levels == 0 || levels > self.levels.len() {
            return Err(Error::invalid(format!(
                "network has {} levels, {levels} requested",
                self.levels.len()
            )));
        }
        let stem = self.stem.forward(tape, vars, lr);
        let mut feat = tape.leaky_relu(stem, LEAK);
        let mut img = lr;
        for level in &self.levels[..levels] {
            let mut f = match &level.rse {
                Some(rse) => rse.forward(tape, vars, feat).0,
                None => feat,
            };
            for conv in &level.convs {
                let y = conv.forward(tape, vars, f);
                f = tape.leaky_relu(y, LEAK);
            }
            let up = level.up.forward(tape, vars, f);
            f = tape.leaky_relu(up, LEAK);
            let residual = level.residual.forward(tape, vars, f);
            let (_, h, w) = tape.value(img).dims3();
            let base = tape.resize(img, 2 * h, 2 * w);
            img = tape.add(base, residual);
            feat = f;
        }
        Ok(tape.clamp01(img))
    }

    /// Clean patch → adversarial patch at the same resolution, recorded on `tape`.
    ///
    /// The clean input is a constant; gradients reach only the network parameters.
    pub fn attack_on_tape(&self, tape: &mut Tape, vars: &[Var], clean: &Image, levels: usize) -> Result<Var> {
        let (aligned, recipe) = pyramid::align_for_pyramid(clean, levels);
        let lr = pyramid::did_downsample(&aligned, levels)?;
        let lr_var = tape.constant(lr.to_tensor());
        let hr = self.forward_on_tape(tape, vars, lr_var, levels)?;
        let (_, h, w) = tape.value(hr).dims3();
        if (h, w) != (aligned.height(), aligned.width()) {
            return Err(Error::invariant(format!(
                "pyramid produced {h}×{w}, expected {}×{}",
                aligned.height(),
                aligned.width()
            )));
        }
        Ok(if (h, w) == (recipe.height, recipe.width) {
            hr
        } else {
            tape.resize(hr, recipe.height, recipe.width)
        })
    }

    /// Inference: align, decimate, super-resolve and restore at an explicit depth.
    pub fn resample(&self, clean: &Image, levels: usize) -> Result<Image> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let out = self.attack_on_tape(&mut tape, &vars, clean, levels)?;
        Image::from_tensor_clamped(tape.value(out).clone())
    }
}

/// Super-resolves `lr` through `levels` pyramid levels (`×2^levels`).
pub fn sru_forward(lr: &Image, net: &SruNetwork, levels: usize) -> Result<Image> {
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape, false);
    let x = tape.constant(lr.to_tensor());
    let out = net.forward_on_tape(&mut tape, &vars, x, levels)?;
    Image::from_tensor_clamped(tape.value(out).clone())
}

/// Pyramid depth actually used for `geom` with `net`.
pub fn attack_levels(geom: &SearchGeometry, net: &SruNetwork) -> Result<usize> {
    Ok(net.usable_levels(pyramid::adaptive_pyramid_levels(geom)?))
}

/// Full attack: adaptive depth → align → decimate → super-resolve → restore.
pub fn attack_patch(clean: &Image, geom: &SearchGeometry, net: &SruNetwork) -> Result<Image> {
    let levels = attack_levels(geom, net)?;
    net.resample(clean, levels)
}

/// Size of the aligned image a clean patch is stretched to before decimation.
pub fn aligned_size(clean: &Image, levels: usize) -> (usize, usize) {
    (aligned_len(clean.height(), levels), aligned_len(clean.width(), levels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(rse: bool) -> PyramidConfig {
        PyramidConfig {
            levels: 3,
            convs_per_block: 1,
            feature_channels: 4,
            group_count: 2,
            attention_kernel: 3,
            rse,
        }
    }

    #[test]
    fn config_validation() {
        assert!(PyramidConfig::default().validate().is_ok());
        let bad = PyramidConfig { levels: 6, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PyramidConfig { feature_channels: 30, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sru_output_is_lr_times_two_to_the_levels() {
        let net = SruNetwork::new(small(true), 0).unwrap();
        let lr = Image::from_fn(16, 16, |c, y, x| ((c + y + x) % 5) as f64 / 5.0);
        let out = sru_forward(&lr, &net, 3).unwrap();
        assert_eq!((out.height(), out.width()), (128, 128));
    }

    #[test]
    fn hand_bilinear_two_by_two() {
        let net = SruNetwork::new(small(true), 1).unwrap();
        let lr = Image::from_fn(2, 2, |_, _, x| x as f64);
        let out = sru_forward(&lr, &net, 1).unwrap();
        let row = [0.0, 0.25, 0.75, 1.0];
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(out.get(c, y, x), row[x]);
                }
            }
        }
    }

    #[test]
    fn rse_zero_everything_gives_zero() {
        let mut rse = Rse::new(4, 2, 3, 3).unwrap();
        for t in rse.params.tensors_mut() {
            t.fill(0.0);
        }
        let out = rse.forward(&Tensor::zeros(&[4, 5, 5])).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rse_identity_with_zero_projection() {
        let mut rse = Rse::new(8, 4, 7, 4).unwrap();
        rse.zero_projection();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::from_vec(&[8, 6, 7], (0..336).map(|_| rng.gen_range(-3.0..3.0)).collect());
        assert_eq!(rse.forward(&x).unwrap().max_abs_diff(&x), 0.0);
    }

    #[test]
    fn rse_rejects_channel_mismatch() {
        let rse = Rse::new(8, 4, 7, 4).unwrap();
        assert!(matches!(rse.forward(&Tensor::zeros(&[4, 3, 3])), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn attention_gate_is_strictly_inside_unit_interval() {
        let rse = Rse::new(4, 2, 7, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_vec(&[4, 5, 5], (0..100).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let g = rse.attention_gate(&x).unwrap();
        assert!(g.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn network_without_rse_has_fewer_parameters() {
        let with = SruNetwork::new(small(true), 0).unwrap();
        let without = SruNetwork::new(small(false), 0).unwrap();
        assert!(without.params().scalar_count() < with.params().scalar_count());
    }

    #[test]
    fn attack_patch_matches_clean_resolution_and_is_deterministic() {
        let net = SruNetwork::new(small(true), 2).unwrap();
        let clean = Image::from_fn(63, 63, |c, y, x| ((c * 3 + y + 2 * x) % 11) as f64 / 11.0);
        let geom = SearchGeometry::new(63, 63.0, 63.0, 200, 200).unwrap();
        let a = attack_patch(&clean, &geom, &net).unwrap();
        let b = attack_patch(&clean, &geom, &net).unwrap();
        assert_eq!((a.height(), a.width()), (63, 63));
        assert_eq!(a, b);
    }

    #[test]
    fn untrained_network_equals_down_up() {
        let net = SruNetwork::new(small(true), 3).unwrap();
        let clean = Image::from_fn(40, 36, |c, y, x| ((c * 5 + y * 3 + x) % 17) as f64 / 17.0);
        for levels in 1..=3 {
            let a = net.resample(&clean, levels).unwrap();
            let b = pyramid::down_up(&clean, levels).unwrap();
            assert_eq!(a, b, "levels {levels}");
        }
    }

    #[test]
    fn load_params_rejects_foreign_architecture() {
        let mut a = SruNetwork::new(small(true), 0).unwrap();
        let b = SruNetwork::new(small(false), 0).unwrap();
        assert!(a.load_params(b.params().clone()).is_err());
    }
}
