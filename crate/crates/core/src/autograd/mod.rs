//! A small reverse-mode tape over CHW tensors.
//!
//! Every network in the crate runs forward on a [`Tape`], one sample at a
//! time. Values are recorded eagerly; [`Tape::backward`] walks the nodes in
//! reverse and returns the gradient of an arbitrary set of seeded outputs.
//! Nodes whose inputs carry no gradient (frozen weights, input images) are
//! skipped, so a frozen network costs only the input-gradient half of its
//! backward pass.

pub mod kernels;

use crate::tensor::Tensor;
use kernels::{col2im, gemm, im2col, ConvGeom, LinearAxis, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        groups: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Add(Var, Var),
    Gate {
        x: Var,
        gate: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid(Var),
    ChannelPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Resize {
        x: Var,
        ay: LinearAxis,
        ax: LinearAxis,
    },
    Clamp01(Var),
    Xcorr {
        search: Var,
        template: Var,
    },
    Gather {
        x: Var,
        channels: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor, needs_grad: bool) -> Var {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grouped 2-D convolution. `w` is `[out, in/groups, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, groups: usize) -> Var {
        let (c, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be rank 4");
        let (o, cg, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(ws[3], k, "square kernels only");
        assert!(groups > 0 && c % groups == 0 && o % groups == 0, "bad group count");
        assert_eq!(cg, c / groups, "conv input channels disagree with weight");
        let geom = ConvGeom { kernel: k, stride, pad };
        let (ho, wo) = (geom.out_len(h), geom.out_len(wd));
        let og = o / groups;
        let kc = cg * k * k;
        let plane = ho * wo;
        let mut out = vec![0.0; o * plane];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let direct = k == 1 && stride == 1 && pad == 0;
            let mut cols = if direct { Vec::new() } else { vec![0.0; kc * plane] };
            for gi in 0..groups {
                let xs = &xv[gi * cg * h * wd..(gi + 1) * cg * h * wd];
                let rhs: &[f64] = if direct {
                    xs
                } else {
                    im2col(xs, cg, h, wd, geom, ho, wo, &mut cols);
                    &cols
                };
                let wg = &wv[gi * og * kc..(gi + 1) * og * kc];
                gemm(
                    Mat::new(wg, og, kc),
                    Mat::new(rhs, kc, plane),
                    0.0,
                    &mut out[gi * og * plane..(gi + 1) * og * plane],
                );
            }
            if let Some(b) = b {
                let bv = self.value(b).data();
                assert_eq!(bv.len(), o);
                for (oc, chunk) in out.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bv[oc]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            Tensor::from_vec(&[o, ho, wo], out),
            Op::Conv2d { x, w, b, geom, groups },
            needs,
        )
    }

    /// Transposed convolution. `w` is `[in, out, k, k]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (c, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(ws.len(), 4, "transposed-conv weight must be rank 4");
        assert_eq!(ws[0], c, "transposed-conv input channels disagree with weight");
        let (o, k) = (ws[1], ws[2]);
        let geom = ConvGeom { kernel: k, stride, pad };
        let (ho, wo) = (geom.transposed_out_len(h), geom.transposed_out_len(wd));
        let okk = o * k * k;
        let mut cols = vec![0.0; okk * h * wd];
        gemm(
            Mat::new(self.value(w).data(), c, okk).t(),
            Mat::new(self.value(x).data(), c, h * wd),
            0.0,
            &mut cols,
        );
        let mut out = vec![0.0; o * ho * wo];
        col2im(&cols, o, ho, wo, geom, h, wd, &mut out);
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), o);
            for (oc, chunk) in out.chunks_mut(ho * wo).enumerate() {
                chunk.iter_mut().for_each(|v| *v += bv[oc]);
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            Tensor::from_vec(&[o, ho, wo], out),
            Op::ConvTranspose2d { x, w, b, geom },
            needs,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let shape = va.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::from_vec(&shape, data), Op::Add(a, b), needs)
    }

    /// Multiplies every channel of `x` (`C×H×W`) by the single-channel `gate` (`1×H×W`).
    pub fn gate(&mut self, x: Var, gate: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        assert_eq!(self.value(gate).shape(), &[1, h, w], "gate must be 1×H×W");
        let gv = self.value(gate).data();
        let plane = h * w;
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * gv[i % plane])
            .collect();
        let needs = self.needs(x) || self.needs(gate);
        self.push(Tensor::from_vec(&[c, h, w], data), Op::Gate { x, gate }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let needs = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, needs)
    }

    /// Output channel `k` is input channel `channels[k]`; channels may repeat.
    pub fn gather_channels(&mut self, x: Var, channels: &[usize]) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let plane = h * w;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(channels.len() * plane);
        for &ch in channels {
            assert!(ch < c, "gather_channels: channel {ch} out of range");
            data.extend_from_slice(&src[ch * plane..(ch + 1) * plane]);
        }
        let needs = self.needs(x);
        self.push(
            Tensor::from_vec(&[channels.len(), h, w], data),
            Op::Gather {
                x,
                channels: channels.to_vec(),
            },
            needs,
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid(x), needs)
    }

    /// Channel-wise max and mean, stacked as a `2×H×W` map.
    pub fn channel_pool(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let plane = h * w;
        let xv = self.value(x).data();
        let mut out = vec![0.0; 2 * plane];
        let mut argmax = vec![0usize; plane];
        for p in 0..plane {
            let mut best = xv[p];
            let mut best_c = 0;
            let mut sum = 0.0;
            for ci in 0..c {
                let v = xv[ci * plane + p];
                sum += v;
                if v > best {
                    best = v;
                    best_c = ci;
                }
            }
            out[p] = best;
            out[plane + p] = sum / c as f64;
            argmax[p] = best_c;
        }
        let needs = self.needs(x);
        self.push(Tensor::from_vec(&[2, h, w], out), Op::ChannelPool { x, argmax }, needs)
    }

    /// Half-pixel-centred bilinear resize to `out_h × out_w`.
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let ay = LinearAxis::new(h, out_h);
        let ax = LinearAxis::new(w, out_w);
        let out = kernels::resize_forward(self.value(x).data(), c, h, w, &ay, &ax);
        let needs = self.needs(x);
        self.push(Tensor::from_vec(&[c, out_h, out_w], out), Op::Resize { x, ay, ax }, needs)
    }

    /// Clamp to `[0, 1]`; gradient passes on the closed interval.
    pub fn clamp01(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.clamp(0.0, 1.0));
        let needs = self.needs(x);
        self.push(out, Op::Clamp01(x), needs)
    }

    /// Depth-wise valid cross-correlation, normalised by the template area.
    pub fn xcorr(&mut self, search: Var, template: Var) -> Var {
        let (c, hs, ws) = self.value(search).dims3();
        let (ct, ht, wt) = self.value(template).dims3();
        assert_eq!(c, ct, "xcorr channel mismatch");
        assert!(ht <= hs && wt <= ws, "template larger than search");
        let (ho, wo) = (hs - ht + 1, ws - wt + 1);
        let norm = 1.0 / (ht * wt) as f64;
        let sv = self.value(search).data();
        let tv = self.value(template).data();
        let mut out = vec![0.0; c * ho * wo];
        for ci in 0..c {
            let s = &sv[ci * hs * ws..(ci + 1) * hs * ws];
            let t = &tv[ci * ht * wt..(ci + 1) * ht * wt];
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for u in 0..ht {
                        let srow = &s[(i + u) * ws + j..(i + u) * ws + j + wt];
                        let trow = &t[u * wt..(u + 1) * wt];
                        acc += srow.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    out[(ci * ho + i) * wo + j] = acc * norm;
                }
            }
        }
        let needs = self.needs(search) || self.needs(template);
        self.push(Tensor::from_vec(&[c, ho, wo], out), Op::Xcorr { search, template }, needs)
    }

    /// Reverse pass seeded with `d(objective)/d(var)` for each `(var, grad)` pair.
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(g.shape(), self.value(*v).shape(), "seed gradient shape mismatch");
            accumulate(&mut grads, *v, g.clone());
            last = last.max(v.0);
        }
        for i in (0..=last).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, groups } => self.conv2d_backward(*x, *w, *b, *geom, *groups, g, grads),
            Op::ConvTranspose2d { x, w, b, geom } => self.conv_t_backward(*x, *w, *b, *geom, g, grads),
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Gate { x, gate } => {
                let (c, h, w) = self.value(*x).dims3();
                let plane = h * w;
                let gv = self.value(*gate).data();
                if self.needs(*x) {
                    let dx = g.data().iter().enumerate().map(|(i, d)| d * gv[i % plane]).collect();
                    accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx));
                }
                if self.needs(*gate) {
                    let xv = self.value(*x).data();
                    let mut dg = vec![0.0; plane];
                    for (i, d) in g.data().iter().enumerate() {
                        dg[i % plane] += d * xv[i];
                    }
                    accumulate(grads, *gate, Tensor::from_vec(&[1, h, w], dg));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let dx = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(d, v)| if *v > 0.0 { *d } else { slope * d })
                    .collect();
                accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::Sigmoid(x) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(d, s)| d * s * (1.0 - s))
                    .collect();
                accumulate(grads, *x, Tensor::from_vec(node.value.shape(), dx));
            }
            Op::ChannelPool { x, argmax } => {
                let (c, h, w) = self.value(*x).dims3();
                let plane = h * w;
                let mut dx = vec![0.0; c * plane];
                let gv = g.data();
                for p in 0..plane {
                    dx[argmax[p] * plane + p] += gv[p];
                    let share = gv[plane + p] / c as f64;
                    for ci in 0..c {
                        dx[ci * plane + p] += share;
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx));
            }
            Op::Resize { x, ay, ax } => {
                let (c, h, w) = self.value(*x).dims3();
                let dx = kernels::resize_backward(g.data(), c, h, w, ay, ax);
                accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx));
            }
            Op::Clamp01(x) => {
                let xv = self.value(*x);
                let dx = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(d, v)| if (0.0..=1.0).contains(v) { *d } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Tensor::from_vec(xv.shape(), dx));
            }
            Op::Xcorr { search, template } => self.xcorr_backward(*search, *template, g, grads),
            Op::Gather { x, channels } => {
                let (c, h, w) = self.value(*x).dims3();
                let plane = h * w;
                let mut dx = vec![0.0; c * plane];
                for (k, &ch) in channels.iter().enumerate() {
                    for (d, v) in dx[ch * plane..(ch + 1) * plane].iter_mut().zip(&g.data()[k * plane..(k + 1) * plane]) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(&[c, h, w], dx));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        groups: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (c, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        let (o, cg, k) = (ws[0], ws[1], ws[2]);
        let (_, ho, wo) = g.dims3();
        let og = o / groups;
        let kc = cg * k * k;
        let plane = ho * wo;
        let gv = g.data();
        let direct = k == 1 && geom.stride == 1 && geom.pad == 0;

        if let Some(b) = b.filter(|b| self.needs(*b)) {
            let db = gv.chunks(plane).map(|ch| ch.iter().sum()).collect();
            accumulate(grads, b, Tensor::from_vec(&[o], db));
        }
        let need_w = self.needs(w);
        let need_x = self.needs(x);
        if !need_w && !need_x {
            return;
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut dw = if need_w { vec![0.0; o * kc] } else { Vec::new() };
        let mut dx = if need_x { vec![0.0; c * h * wd] } else { Vec::new() };
        let mut cols = vec![0.0; if direct { 0 } else { kc * plane }];
        let mut dcols = vec![0.0; kc * plane];
        for gi in 0..groups {
            let gout = &gv[gi * og * plane..(gi + 1) * og * plane];
            if need_w {
                let xs = &xv[gi * cg * h * wd..(gi + 1) * cg * h * wd];
                let rhs: &[f64] = if direct {
                    xs
                } else {
                    im2col(xs, cg, h, wd, geom, ho, wo, &mut cols);
                    &cols
                };
                gemm(
                    Mat::new(gout, og, plane),
                    Mat::new(rhs, kc, plane).t(),
                    0.0,
                    &mut dw[gi * og * kc..(gi + 1) * og * kc],
                );
            }
            if need_x {
                let wg = &wv[gi * og * kc..(gi + 1) * og * kc];
                let dxs = &mut dx[gi * cg * h * wd..(gi + 1) * cg * h * wd];
                if direct {
                    gemm(Mat::new(wg, og, kc).t(), Mat::new(gout, og, plane), 0.0, dxs);
                } else {
                    gemm(Mat::new(wg, og, kc).t(), Mat::new(gout, og, plane), 0.0, &mut dcols);
                    col2im(&dcols, cg, h, wd, geom, ho, wo, dxs);
                }
            }
        }
        if need_w {
            accumulate(grads, w, Tensor::from_vec(&ws, dw));
        }
        if need_x {
            accumulate(grads, x, Tensor::from_vec(&[c, h, wd], dx));
        }
    }

    fn conv_t_backward(&self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (c, h, wd) = self.value(x).dims3();
        let ws = self.value(w).shape().to_vec();
        let (o, k) = (ws[1], ws[2]);
        let (_, ho, wo) = g.dims3();
        let okk = o * k * k;
        if let Some(b) = b.filter(|b| self.needs(*b)) {
            let db = g.data().chunks(ho * wo).map(|ch| ch.iter().sum()).collect();
            accumulate(grads, b, Tensor::from_vec(&[o], db));
        }
        let need_w = self.needs(w);
        let need_x = self.needs(x);
        if !need_w && !need_x {
            return;
        }
        let mut gcols = vec![0.0; okk * h * wd];
        im2col(g.data(), o, ho, wo, geom, h, wd, &mut gcols);
        if need_x {
            let mut dx = vec![0.0; c * h * wd];
            gemm(
                Mat::new(self.value(w).data(), c, okk),
                Mat::new(&gcols, okk, h * wd),
                0.0,
                &mut dx,
            );
            accumulate(grads, x, Tensor::from_vec(&[c, h, wd], dx));
        }
        if need_w {
            let mut dw = vec![0.0; c * okk];
            gemm(
                Mat::new(self.value(x).data(), c, h * wd),
                Mat::new(&gcols, okk, h * wd).t(),
                0.0,
                &mut dw,
            );
            accumulate(grads, w, Tensor::from_vec(&ws, dw));
        }
    }

    fn xcorr_backward(&self, search: Var, template: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (c, hs, ws) = self.value(search).dims3();
        let (_, ht, wt) = self.value(template).dims3();
        let (ho, wo) = (hs - ht + 1, ws - wt + 1);
        let norm = 1.0 / (ht * wt) as f64;
        let sv = self.value(search).data();
        let tv = self.value(template).data();
        let gv = g.data();
        let need_s = self.needs(search);
        let need_t = self.needs(template);
        let mut ds = vec![0.0; if need_s { c * hs * ws } else { 0 }];
        let mut dt = vec![0.0; if need_t { c * ht * wt } else { 0 }];
        for ci in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let d = gv[(ci * ho + i) * wo + j] * norm;
                    if d == 0.0 {
                        continue;
                    }
                    for u in 0..ht {
                        let srow = (ci * hs + i + u) * ws + j;
                        let trow = (ci * ht + u) * wt;
                        for v in 0..wt {
                            if need_s {
                                ds[srow + v] += d * tv[trow + v];
                            }
                            if need_t {
                                dt[trow + v] += d * sv[srow + v];
                            }
                        }
                    }
                }
            }
        }
        if need_s {
            accumulate(grads, search, Tensor::from_vec(&[c, hs, ws], ds));
        }
        if need_t {
            accumulate(grads, template, Tensor::from_vec(&[c, ht, wt], dt));
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
