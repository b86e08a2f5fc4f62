//! Tracker head outputs over the response grid.

use crate::autograd::sigmoid;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tensor::Tensor;

/// Classification logits, channel 0 = background, channel 1 = target.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    logits: Tensor,
}

/// Regression values, channels ordered `(x, y, w, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionMap {
    values: Tensor,
}

fn check(t: &Tensor, channels: usize, what: &str) -> Result<()> {
    match t.shape() {
        [c, h, w] if *c == channels && *h > 0 && *w > 0 => {}
        s => {
            return Err(Error::invalid(format!(
                "{what} must have {channels} channels over a non-empty grid, got shape {s:?}"
            )))
        }
    }
    if !t.all_finite() {
        return Err(Error::invalid(format!("{what} contains non-finite values")));
    }
    Ok(())
}

impl ScoreMap {
    pub fn new(logits: Tensor) -> Result<Self> {
        check(&logits, 2, "score map")?;
        Ok(Self { logits })
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut t = Tensor::zeros(&[2, h, w]);
        for i in 0..h {
            for j in 0..w {
                let (b, tg) = f(i, j);
                t.data_mut()[i * w + j] = b;
                t.data_mut()[h * w + i * w + j] = tg;
            }
        }
        Self::new(t)
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, h, w) = self.logits.dims3();
        (h, w)
    }

    pub fn cells(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn tensor(&self) -> &Tensor {
        &self.logits
    }

    /// Logits of cell `idx` (row-major) as `(background, target)`.
    pub fn logits_at(&self, idx: usize) -> (f64, f64) {
        let n = self.cells();
        (self.logits.data()[idx], self.logits.data()[n + idx])
    }

    /// Two-way softmax probability of the target class at cell `idx`.
    pub fn target_prob(&self, idx: usize) -> f64 {
        let (b, t) = self.logits_at(idx);
        sigmoid(t - b)
    }
}

impl RegressionMap {
    pub fn new(values: Tensor) -> Result<Self> {
        check(&values, 4, "regression map")?;
        Ok(Self { values })
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> [f64; 4]) -> Result<Self> {
        let mut t = Tensor::zeros(&[4, h, w]);
        for i in 0..h {
            for j in 0..w {
                for (c, v) in f(i, j).into_iter().enumerate() {
                    t.data_mut()[(c * h + i) * w + j] = v;
                }
            }
        }
        Self::new(t)
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            values: Tensor::zeros(&[4, h, w]),
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, h, w) = self.values.dims3();
        (h, w)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    /// `(x, y, w, h)` at cell `idx` (row-major).
    pub fn at(&self, idx: usize) -> [f64; 4] {
        let (h, w) = self.grid();
        let n = h * w;
        [0, 1, 2, 3].map(|c| self.values.data()[c * n + idx])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerOutput {
    pub score: ScoreMap,
    pub regression: RegressionMap,
    pub predicted_box: BBox,
}
