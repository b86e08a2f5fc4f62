use image::{Rgb, RgbImage};

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;
use crate::victim::{Template, ToyTracker};

/// Input-gradient saliency of the victim's target logits over a search patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major values in `[0, 1]`, normalised to a maximum of 1.
    pub values: Vec<f64>,
}

/// Back-propagates the sum of target-class logits to the patch pixels and
/// takes the per-pixel L2 norm across colour channels.
pub fn heatmap(tracker: &ToyTracker, template: &Template, patch: &Image) -> Result<Heatmap> {
    let size = tracker.config().search_size;
    if patch.height() != size || patch.width() != size {
        return Err(Error::invalid(format!("heatmap expects a {size}×{size} search patch")));
    }
    let mut tape = Tape::new();
    let vars = tracker.params().bind(&mut tape, false);
    let z = tape.constant(template.features.clone());
    let x = tape.leaf(patch.to_tensor(), true);
    let (cls, _) = tracker.heads_on_tape(&mut tape, &vars, z, x);
    let (_, gh, gw) = tape.value(cls).dims3();
    let mut seed = Tensor::zeros(&[2, gh, gw]);
    seed.data_mut()[gh * gw..].fill(1.0);
    let grads = tape.backward(&[(cls, seed)]);
    let g = grads.get_or_zeros(x, &[3, size, size]);
    let plane = size * size;
    let mut values: Vec<f64> = (0..plane)
        .map(|i| (0..3).map(|c| g.data()[c * plane + i].powi(2)).sum::<f64>().sqrt())
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap {
        height: size,
        width: size,
        values,
    })
}

/// Fraction of pixels whose normalised response exceeds `threshold`.
pub fn high_response_fraction(map: &Heatmap, threshold: f64) -> f64 {
    map.values.iter().filter(|v| **v > threshold).count() as f64 / map.values.len().max(1) as f64
}

/// Blue → cyan → yellow → red colour ramp.
pub fn colorize(map: &Heatmap) -> RgbImage {
    let stops: [(f64, [f64; 3]); 4] = [
        (0.0, [0.0, 0.0, 0.5]),
        (0.35, [0.0, 0.8, 1.0]),
        (0.7, [1.0, 1.0, 0.0]),
        (1.0, [1.0, 0.0, 0.0]),
    ];
    let mut img = RgbImage::new(map.width as u32, map.height as u32);
    for (i, v) in map.values.iter().enumerate() {
        let v = v.clamp(0.0, 1.0);
        let k = stops.windows(2).position(|w| v <= w[1].0).unwrap_or(2);
        let ((a, ca), (b, cb)) = (stops[k], stops[k + 1]);
        let t = (v - a) / (b - a);
        let px = std::array::from_fn(|c| ((ca[c] + (cb[c] - ca[c]) * t) * 255.0).round() as u8);
        img.put_pixel((i % map.width) as u32, (i / map.width) as u32, Rgb(px));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::victim::{SiameseTracker, VictimConfig};

    #[test]
    fn heatmap_is_normalised() {
        let tracker = ToyTracker::new(VictimConfig::default(), 2).unwrap();
        let patch = Image::from_fn(64, 64, |c, y, x| ((x * 7 + y * 3 + c * 11) % 17) as f64 / 16.0);
        let template = Template {
            features: tracker.embed_template(&Image::filled(32, 32, [0.3, 0.6, 0.9])).unwrap(),
        };
        let map = heatmap(&tracker, &template, &patch).unwrap();
        let max = map.values.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let img = colorize(&map);
        assert_eq!(img.dimensions(), (64, 64));
    }
}
