//! Parameter storage, layer descriptors and the Adam optimiser.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Named parameter tensors of one network, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter on `tape` and returns the matching variables.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    /// Collects the gradient of every bound parameter (zeros where none flowed).
    pub fn collect_grads(&self, vars: &[Var], grads: &Gradients) -> Vec<Tensor> {
        vars.iter()
            .zip(&self.tensors)
            .map(|(v, t)| grads.get_or_zeros(*v, t.shape()))
            .collect()
    }

    /// SHA-256 over names, shapes and raw bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Flattens all parameters into one vector (test and diagnostics helper).
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.scalar_count());
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Uniform initialisation with bound `gain / sqrt(fan_in)`.
pub fn fan_in_uniform(shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Tensor {
    let bound = gain / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Bound `1/sqrt(fan_in)`.
    FanIn,
    /// Bound `sqrt(6/fan_in)`, suited to ReLU stacks.
    He,
    Zero,
}

impl Init {
    fn tensor(self, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
        match self {
            Init::FanIn => fan_in_uniform(shape, fan_in, 1.0, rng),
            Init::He => fan_in_uniform(shape, fan_in, 6f64.sqrt(), rng),
            Init::Zero => Tensor::zeros(shape),
        }
    }
}

/// A convolution whose weights live in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub init: Init,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            groups: 1,
            init: Init::FanIn,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

impl Conv {
    /// Adds a same-padded convolution `name.weight` / `name.bias` to `store`.
    pub fn build(store: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let k = spec.kernel;
        let cg = spec.in_ch / spec.groups;
        let fan_in = cg * k * k;
        let weight = store.push(
            format!("{name}.weight"),
            spec.init.tensor(&[spec.out_ch, cg, k, k], fan_in, rng),
        );
        let bias = store.push(format!("{name}.bias"), spec.init.tensor(&[spec.out_ch], fan_in, rng));
        Self {
            weight,
            bias,
            stride: spec.stride,
            pad: k / 2,
            groups: spec.groups,
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        tape.conv2d(x, vars[self.weight], Some(vars[self.bias]), self.stride, self.pad, self.groups)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).fill(0.0);
        store.get_mut(self.bias).fill(0.0);
    }
}

/// Stride-2, kernel-4 transposed convolution: exactly doubles resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Upsample2x {
    pub weight: usize,
    pub bias: usize,
}

impl Upsample2x {
    pub fn build(store: &mut ParamStore, name: &str, in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        // fan-in seen by one output pixel of a stride-2 k=4 transposed conv.
        let fan_in = in_ch * 4;
        let weight = store.push(
            format!("{name}.weight"),
            fan_in_uniform(&[in_ch, out_ch, 4, 4], fan_in, 1.0, rng),
        );
        let bias = store.push(format!("{name}.bias"), fan_in_uniform(&[out_ch], fan_in, 1.0, rng));
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        tape.conv_transpose2d(x, vars[self.weight], Some(vars[self.bias]), 2, 1)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Sums per-sample gradient lists in order and scales by `1/n`.
pub fn mean_grads(per_sample: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let n = per_sample.len() as f64;
    let mut iter = per_sample.into_iter();
    let mut acc = iter.next().expect("at least one sample");
    for sample in iter {
        for (a, g) in acc.iter_mut().zip(&sample) {
            a.add_assign(g);
        }
    }
    for a in &mut acc {
        a.scale_inplace(1.0 / n);
    }
    acc
}
