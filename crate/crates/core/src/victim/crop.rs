//! Context cropping around a box, padded with the frame's channel means.

use crate::error::{Error, Result};
use crate::geometry::{BBox, SearchGeometry};
use crate::image::Image;

/// Side of the square context region: `factor · sqrt((w+p)(h+p))`, `p = (w+h)/2`.
pub fn context_side(b: &BBox, factor: f64) -> f64 {
    let p = (b.w + b.h) / 2.0;
    factor * ((b.w + p) * (b.h + p)).sqrt()
}

/// Bilinearly samples a `size × size` patch covering the square of side
/// `side` centred at `(cx, cy)`. Out-of-frame samples read the channel mean.
pub fn crop_square(frame: &Image, cx: f64, cy: f64, side: f64, size: usize) -> Image {
    let means = frame.channel_means();
    let (fh, fw) = (frame.height() as isize, frame.width() as isize);
    let step = side / size as f64;
    let x0 = cx - side / 2.0;
    let y0 = cy - side / 2.0;
    let coords = |origin: f64| -> Vec<(isize, f64)> {
        (0..size)
            .map(|u| {
                let f = origin + (u as f64 + 0.5) * step - 0.5;
                let i = f.floor();
                (i as isize, f - i)
            })
            .collect()
    };
    let xs = coords(x0);
    let ys = coords(y0);
    let mut out = Image::zeros(size, size);
    for c in 0..3 {
        let plane = frame.plane(c);
        let px = |y: isize, x: isize| -> f64 {
            if y < 0 || x < 0 || y >= fh || x >= fw {
                means[c]
            } else {
                plane[(y * fw + x) as usize]
            }
        };
        for (v, &(iy, wy)) in ys.iter().enumerate() {
            for (u, &(ix, wx)) in xs.iter().enumerate() {
                let (a, b) = (px(iy, ix), px(iy, ix + 1));
                let (d, e) = (px(iy + 1, ix), px(iy + 1, ix + 1));
                let top = a + (b - a) * wx;
                let bottom = d + (e - d) * wx;
                out.set(c, v, u, top + (bottom - top) * wy);
            }
        }
    }
    out
}

/// Crops a search (or template) patch around `prev_box` and reports its geometry.
pub fn crop_search_patch(frame: &Image, prev_box: &BBox, search_size: usize, context: f64) -> Result<(Image, SearchGeometry)> {
    prev_box.validate()?;
    if !prev_box.intersects_frame(frame.height(), frame.width()) {
        return Err(Error::invalid(format!("box {prev_box:?} lies outside the frame")));
    }
    if search_size == 0 || !(context > 0.0) {
        return Err(Error::invalid("search size and context factor must be positive"));
    }
    let side = context_side(prev_box, context);
    let patch = crop_square(frame, prev_box.cx, prev_box.cy, side, search_size);
    let (fh, fw) = (frame.height(), frame.width());
    let mut geom = SearchGeometry::new(search_size, side.min(fh as f64), side.min(fw as f64), fh, fw)?;
    geom.scale = side / search_size as f64;
    Ok((patch, geom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_formula_by_hand() {
        let b = BBox::new(100.0, 100.0, 50.0, 50.0).unwrap();
        // p = 50, sqrt(100·100) = 100, ×2.
        assert_eq!(context_side(&b, 2.0), 200.0);
    }

    #[test]
    fn centred_box_in_uniform_frame() {
        let frame = Image::filled(400, 600, [0.2, 0.5, 0.7]);
        let b = BBox::new(300.0, 200.0, 40.0, 40.0).unwrap();
        let (patch, geom) = crop_search_patch(&frame, &b, 64, 2.0).unwrap();
        assert!(patch.plane(0).iter().all(|v| *v == 0.2));
        assert!(patch.plane(2).iter().all(|v| *v == 0.7));
        assert_eq!(geom.patch_w, 160.0);
        assert!((geom.area_fraction() - 160.0 * 160.0 / (400.0 * 600.0)).abs() < 1e-15);
        assert_eq!(geom.scale, 2.5);
    }

    #[test]
    fn corner_box_pads_with_channel_means() {
        let frame = Image::from_fn(100, 100, |c, y, x| ((c * 7 + y * 3 + x * 5) % 10) as f64 / 10.0);
        let means = frame.channel_means();
        let b = BBox::new(0.0, 0.0, 20.0, 20.0).unwrap();
        let (patch, _) = crop_search_patch(&frame, &b, 32, 2.0).unwrap();
        // The top-left quadrant of the crop lies entirely outside the frame.
        for c in 0..3 {
            for y in 0..14 {
                for x in 0..14 {
                    assert_eq!(patch.get(c, y, x), means[c]);
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_and_outside_boxes() {
        let frame = Image::zeros(50, 50);
        let outside = BBox::new(500.0, 500.0, 10.0, 10.0).unwrap();
        assert!(crop_search_patch(&frame, &outside, 32, 2.0).is_err());
        let flat = BBox { cx: 10.0, cy: 10.0, w: 0.0, h: 5.0 };
        assert!(crop_search_patch(&frame, &flat, 32, 2.0).is_err());
    }
}
