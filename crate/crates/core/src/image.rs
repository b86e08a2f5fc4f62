//! Three-channel images with values in `[0, 1]`, stored planar (CHW).

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::autograd::kernels::{resize_forward, LinearAxis};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(3 * height * width);
        for v in rgb {
            data.extend(std::iter::repeat(v.clamp(0.0, 1.0)).take(height * width));
        }
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Self { height, width, data }
    }

    /// Validates a `3×H×W` tensor. Values outside `[0,1]` or non-finite are rejected.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let (c, height, width) = match t.shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(Error::invalid(format!("image tensor must be 3×H×W, got {s:?}"))),
        };
        if c != 3 || height == 0 || width == 0 {
            return Err(Error::invalid(format!("image tensor must be 3×H×W, got {:?}", t.shape())));
        }
        if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data: t.into_data(),
        })
    }

    /// Like [`Image::from_tensor`] but clamps into `[0,1]`; non-finite values are an error.
    pub fn from_tensor_clamped(t: Tensor) -> Result<Self> {
        if !t.all_finite() {
            return Err(Error::invariant("non-finite pixel value"));
        }
        Self::from_tensor(t.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[3, self.height, self.width], self.data.clone())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = (self.height * self.width) as f64;
        [0, 1, 2].map(|c| self.plane(c).iter().sum::<f64>() / n)
    }

    /// Half-pixel-centred bilinear resize (same kernel as the differentiable op).
    pub fn resize(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let ay = LinearAxis::new(self.height, height);
        let ax = LinearAxis::new(self.width, width);
        let data = resize_forward(&self.data, 3, self.height, self.width, &ay, &ax);
        Image { height, width, data }
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; 3 * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 255.0;
            }
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = [0, 1, 2].map(|c| (self.get(c, y as usize, x as usize) * 255.0).round() as u8);
            Rgb(px)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_and_validation() {
        let img = Image::from_fn(4, 5, |c, y, x| (c + y + x) as f64 / 12.0);
        assert_eq!(Image::from_tensor(img.to_tensor()).unwrap(), img);
        let bad = Tensor::full(&[3, 2, 2], 1.5);
        assert!(Image::from_tensor(bad.clone()).is_err());
        assert!(Image::from_tensor_clamped(bad).unwrap().data().iter().all(|v| *v == 1.0));
        assert!(Image::from_tensor(Tensor::zeros(&[1, 2, 2])).is_err());
    }

    #[test]
    fn resize_preserves_constants() {
        let img = Image::filled(9, 7, [0.2, 0.4, 0.6]);
        let r = img.resize(16, 3);
        assert!(r.plane(1).iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn rgb8_round_trip() {
        let img = Image::from_fn(3, 3, |c, y, x| ((c * 9 + y * 3 + x) * 9) as f64 / 255.0);
        let back = Image::from_rgb8(&img.to_rgb8());
        assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
