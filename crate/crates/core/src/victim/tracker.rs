//! A minimal single-anchor Siamese tracker used as the attack victim.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapter::SiameseTracker;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{Conv, ConvSpec, Init, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimConfig {
    pub search_size: usize,
    pub template_size: usize,
    pub context_search: f64,
    pub context_template: f64,
    /// Output channels of the five backbone convolutions.
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub head_channels: usize,
}

impl Default for VictimConfig {
    fn default() -> Self {
        Self {
            search_size: 64,
            template_size: 32,
            context_search: 2.0,
            context_template: 1.0,
            channels: vec![16, 24, 24, 32, 32],
            strides: vec![1, 2, 1, 2, 1],
            head_channels: 32,
        }
    }
}

impl VictimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.strides.len() || self.channels.is_empty() {
            return Err(Error::config("victim channels and strides must have equal, non-zero length"));
        }
        if self.template_size < 8 || self.search_size < self.template_size {
            return Err(Error::config("victim needs search_size ≥ template_size ≥ 8"));
        }
        if self.strides.iter().any(|s| *s == 0) || self.channels.iter().any(|c| *c == 0) {
            return Err(Error::config("victim strides and channels must be positive"));
        }
        if self.context_search <= 0.0 || self.context_template <= 0.0 {
            return Err(Error::config("context factors must be positive"));
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    fn feature_len(&self, input: usize) -> usize {
        self.strides.iter().fold(input, |n, s| (n - 1) / s + 1)
    }

    /// Side of the square response grid.
    pub fn grid_size(&self) -> usize {
        self.feature_len(self.search_size) - self.feature_len(self.template_size) + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTracker {
    config: VictimConfig,
    params: ParamStore,
    backbone: Vec<Conv>,
    neck: Conv,
    cls: Conv,
    reg: Conv,
}

impl ToyTracker {
    pub fn new(config: VictimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut in_ch = 3;
        let mut backbone = Vec::new();
        for (i, (&c, &s)) in config.channels.iter().zip(&config.strides).enumerate() {
            let spec = ConvSpec::new(in_ch, c, 3).stride(s).init(Init::He);
            backbone.push(Conv::build(&mut params, &format!("backbone{i}"), spec, &mut rng));
            in_ch = c;
        }
        let hc = config.head_channels;
        let neck = Conv::build(&mut params, "neck", ConvSpec::new(in_ch, hc, 3).init(Init::He), &mut rng);
        let cls = Conv::build(&mut params, "cls", ConvSpec::new(hc, 2, 1), &mut rng);
        // (x, y, log-scale); the scale channel is emitted for both w and h.
        let reg = Conv::build(&mut params, "reg", ConvSpec::new(hc, 3, 1), &mut rng);
        Ok(Self {
            config,
            params,
            backbone,
            neck,
            cls,
            reg,
        })
    }

    pub fn config(&self) -> &VictimConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn load_params(&mut self, params: ParamStore) -> Result<()> {
        let same = params.names() == self.params.names()
            && params
                .tensors()
                .iter()
                .zip(self.params.tensors())
                .all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(Error::invalid("parameter set does not match the victim architecture"));
        }
        self.params = params;
        Ok(())
    }

    /// Zeroes the classification head so the logits are input-independent.
    pub fn zero_classifier(&mut self) {
        self.cls.zero(&mut self.params);
    }

    pub fn embed_on_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        self.backbone.iter().fold(x, |h, conv| {
            let y = conv.forward(tape, vars, h);
            tape.relu(y)
        })
    }

    /// Returns `(score logits 2×G×G, regression 4×G×G)`.
    ///
    /// The square context crop hides the previous box's aspect ratio, so the
    /// tracker predicts one log-scale shared by width and height.
    pub fn heads_on_tape(&self, tape: &mut Tape, vars: &[Var], template: Var, search: Var) -> (Var, Var) {
        let s = self.embed_on_tape(tape, vars, search);
        let corr = tape.xcorr(s, template);
        let n = self.neck.forward(tape, vars, corr);
        let n = tape.relu(n);
        let r = self.reg.forward(tape, vars, n);
        (self.cls.forward(tape, vars, n), tape.gather_channels(r, &[0, 1, 2, 2]))
    }

    fn check_patch(&self, patch: &Image, size: usize) -> Result<()> {
        if patch.height() != size || patch.width() != size {
            return Err(Error::invalid(format!(
                "expected a {size}×{size} patch, got {}×{}",
                patch.height(),
                patch.width()
            )));
        }
        Ok(())
    }
}

impl SiameseTracker for ToyTracker {
    fn search_size(&self) -> usize {
        self.config.search_size
    }

    fn template_size(&self) -> usize {
        self.config.template_size
    }

    fn context_search(&self) -> f64 {
        self.config.context_search
    }

    fn context_template(&self) -> f64 {
        self.config.context_template
    }

    fn response_stride(&self) -> f64 {
        self.config.total_stride() as f64
    }

    fn embed_template(&self, patch: &Image) -> Result<Tensor> {
        self.check_patch(patch, self.config.template_size)?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let x = tape.constant(patch.to_tensor());
        let f = self.embed_on_tape(&mut tape, &vars, x);
        Ok(tape.value(f).clone())
    }

    fn respond(&self, template: &Tensor, search: &Image) -> Result<(Tensor, Tensor)> {
        self.check_patch(search, self.config.search_size)?;
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let t = tape.constant(template.clone());
        let x = tape.constant(search.to_tensor());
        let (cls, reg) = self.heads_on_tape(&mut tape, &vars, t, x);
        Ok((tape.value(cls).clone(), tape.value(reg).clone()))
    }
}
