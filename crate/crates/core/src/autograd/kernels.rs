//! Raw slice kernels behind the tape operations.

/// Spatial geometry of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_len(&self, input: usize) -> usize {
        (input + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output length of the transposed convolution with the same geometry.
    pub fn transposed_out_len(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds `x` (`c × h × w`) into `cols` (`c·k·k × ho·wo`).
#[allow(clippy::too_many_arguments)]
pub fn im2col(x: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, ho: usize, wo: usize, cols: &mut [f64]) {
    let k = g.kernel;
    let plane = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * plane);
    for ci in 0..c {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, out) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *out = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `x`.
#[allow(clippy::too_many_arguments)]
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, ho: usize, wo: usize, x: &mut [f64]) {
    let k = g.kernel;
    let plane = ho * wo;
    for ci in 0..c {
        let dst = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Strided view of a row-major matrix, for [`gemm`].
#[derive(Clone, Copy)]
pub struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// Logical transpose of a stored `rows × cols` matrix.
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            transposed: !self.transposed,
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out (m × n) = beta·out + a (m × k) · b (k × n)`.
pub fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f64, out: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions disagree");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(a.data.len() >= m * k && b.data.len() >= k * n && out.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: bounds asserted above; strides describe dense row-major storage
    // of the stated logical shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// One axis of a half-pixel-centred bilinear resampling.
#[derive(Clone, Debug)]
pub struct LinearAxis {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub w_hi: Vec<f64>,
}

impl LinearAxis {
    pub fn new(input: usize, output: usize) -> Self {
        let scale = input as f64 / output as f64;
        let mut lo = Vec::with_capacity(output);
        let mut hi = Vec::with_capacity(output);
        let mut w_hi = Vec::with_capacity(output);
        for o in 0..output {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            lo.push(i0);
            hi.push(i1);
            w_hi.push(if i1 == i0 { 0.0 } else { src - i0 as f64 });
        }
        Self { lo, hi, w_hi }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }
}

pub fn resize_forward(x: &[f64], c: usize, h: usize, w: usize, ay: &LinearAxis, ax: &LinearAxis) -> Vec<f64> {
    let (oh, ow) = (ay.len(), ax.len());
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        let dst = &mut out[ci * oh * ow..(ci + 1) * oh * ow];
        for oy in 0..oh {
            let (y0, y1, wy) = (ay.lo[oy], ay.hi[oy], ay.w_hi[oy]);
            let r0 = &src[y0 * w..(y0 + 1) * w];
            let r1 = &src[y1 * w..(y1 + 1) * w];
            for ox in 0..ow {
                let (x0, x1, wx) = (ax.lo[ox], ax.hi[ox], ax.w_hi[ox]);
                let top = r0[x0] * (1.0 - wx) + r0[x1] * wx;
                let bottom = r1[x0] * (1.0 - wx) + r1[x1] * wx;
                dst[oy * ow + ox] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}

pub fn resize_backward(g: &[f64], c: usize, h: usize, w: usize, ay: &LinearAxis, ax: &LinearAxis) -> Vec<f64> {
    let (oh, ow) = (ay.len(), ax.len());
    let mut dx = vec![0.0; c * h * w];
    for ci in 0..c {
        let src = &g[ci * oh * ow..(ci + 1) * oh * ow];
        let dst = &mut dx[ci * h * w..(ci + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, wy) = (ay.lo[oy], ay.hi[oy], ay.w_hi[oy]);
            for ox in 0..ow {
                let (x0, x1, wx) = (ax.lo[ox], ax.hi[ox], ax.w_hi[ox]);
                let v = src[oy * ow + ox];
                dst[y0 * w + x0] += v * (1.0 - wy) * (1.0 - wx);
                dst[y0 * w + x1] += v * (1.0 - wy) * wx;
                dst[y1 * w + x0] += v * wy * (1.0 - wx);
                dst[y1 * w + x1] += v * wy * wx;
            }
        }
    }
    dx
}
