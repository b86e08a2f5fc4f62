//! Pyramid depth selection, direct downsampling and size alignment.

use crate::error::{Error, Result};
use crate::geometry::SearchGeometry;
use crate::image::Image;

/// Hard upper bound on the number of pyramid levels.
pub const MAX_LEVELS: usize = 5;

/// `floor(sqrt(H_s · Q))` with `Q = (h_s·w_s)/(H·W)`, before clamping.
///
/// Computed by comparing `n²·H·W` against `H_s·h_s·w_s` so that exact
/// squares are not lost to rounding in the square root.
pub fn raw_pyramid_levels(geom: &SearchGeometry) -> Result<u64> {
    geom.validate()?;
    let num = geom.search_size as f64 * geom.patch_h * geom.patch_w;
    let den = geom.frame_h as f64 * geom.frame_w as f64;
    let mut n = (num / den).sqrt().floor() as u64;
    while n > 0 && (n * n) as f64 * den > num {
        n -= 1;
    }
    while ((n + 1) * (n + 1)) as f64 * den <= num {
        n += 1;
    }
    Ok(n)
}

/// Number of pyramid levels for a search patch, clamped to `[1, MAX_LEVELS]`.
pub fn adaptive_pyramid_levels(geom: &SearchGeometry) -> Result<usize> {
    let raw = raw_pyramid_levels(geom)?;
    Ok(raw.clamp(1, MAX_LEVELS as u64) as usize)
}

/// Keeps every `2^levels`-th pixel, anchored top-left. No anti-aliasing.
pub fn did_downsample(img: &Image, levels: usize) -> Result<Image> {
    let factor = 1usize << levels;
    let (h, w) = (img.height(), img.width());
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid(format!(
            "{h}×{w} image is not divisible by 2^{levels}"
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    Ok(Image::from_fn(oh, ow, |c, y, x| img.get(c, y * factor, x * factor)))
}

/// Original size of an image that was stretched to a pyramid-friendly size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RestoreRecipe {
    pub height: usize,
    pub width: usize,
}

pub fn aligned_len(len: usize, levels: usize) -> usize {
    let f = 1usize << levels;
    len.div_ceil(f) * f
}

/// Bilinearly stretches `img` up to the next multiple of `2^levels` per axis.
pub fn align_for_pyramid(img: &Image, levels: usize) -> (Image, RestoreRecipe) {
    let recipe = RestoreRecipe {
        height: img.height(),
        width: img.width(),
    };
    let (h, w) = (aligned_len(img.height(), levels), aligned_len(img.width(), levels));
    (img.resize(h, w), recipe)
}

/// Inverse of [`align_for_pyramid`].
pub fn restore(recipe: RestoreRecipe, img: &Image) -> Image {
    img.resize(recipe.height, recipe.width)
}

/// The non-adversarial "down-up" baseline: align, decimate, bilinear ×2 per level, restore.
pub fn down_up(clean: &Image, levels: usize) -> Result<Image> {
    let (aligned, recipe) = align_for_pyramid(clean, levels);
    let mut img = did_downsample(&aligned, levels)?;
    for _ in 0..levels {
        img = img.resize(img.height() * 2, img.width() * 2);
    }
    Ok(restore(recipe, &img))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(hs: usize, ph: f64, pw: f64, fh: usize, fw: usize) -> SearchGeometry {
        SearchGeometry::new(hs, ph, pw, fh, fw).unwrap()
    }

    #[test]
    fn paper_scale_patch_in_hd_frame_gets_four_levels() {
        let g = geom(255, 255.0, 255.0, 720, 1280);
        assert_eq!(raw_pyramid_levels(&g).unwrap(), 4);
        assert_eq!(adaptive_pyramid_levels(&g).unwrap(), 4);
    }

    #[test]
    fn unit_product_gives_one_level() {
        // Q = 1/255 exactly: a 1×1 patch in a 1×255 frame.
        let g = geom(255, 1.0, 1.0, 1, 255);
        assert_eq!(raw_pyramid_levels(&g).unwrap(), 1);
    }

    #[test]
    fn tiny_targets_clamp_up_to_one_level() {
        // Q = 0.001 → sqrt(0.255) → 0 → clamped to 1.
        let g = geom(255, 10.0, 10.0, 100, 1000);
        assert_eq!(raw_pyramid_levels(&g).unwrap(), 0);
        assert_eq!(adaptive_pyramid_levels(&g).unwrap(), 1);
    }

    #[test]
    fn whole_frame_patch_clamps_down_to_cap() {
        let g = geom(255, 100.0, 100.0, 100, 100);
        assert_eq!(raw_pyramid_levels(&g).unwrap(), 15);
        assert_eq!(adaptive_pyramid_levels(&g).unwrap(), MAX_LEVELS);
    }

    #[test]
    fn did_shapes_and_constants() {
        let img = Image::filled(256, 256, [0.3, 0.3, 0.3]);
        let d = did_downsample(&img, 4).unwrap();
        assert_eq!((d.height(), d.width()), (16, 16));
        let gray = Image::filled(64, 64, [0.5, 0.5, 0.5]);
        let d = did_downsample(&gray, 2).unwrap();
        assert_eq!((d.height(), d.width()), (16, 16));
        assert!(d.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn did_on_period_two_checkerboard_is_constant() {
        let board = Image::from_fn(8, 8, |_, y, x| ((x + y) % 2) as f64);
        let d = did_downsample(&board, 1).unwrap();
        assert_eq!((d.height(), d.width()), (4, 4));
        // Samples at (2i, 2j) all have even x+y.
        assert!(d.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn did_rejects_indivisible_sizes() {
        let img = Image::zeros(255, 256);
        assert!(matches!(did_downsample(&img, 4), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn alignment_rounds_up_to_multiples() {
        let (a, r) = align_for_pyramid(&Image::zeros(255, 255), 4);
        assert_eq!((a.height(), a.width()), (256, 256));
        assert_eq!(r, RestoreRecipe { height: 255, width: 255 });

        let img = Image::from_fn(256, 256, |c, y, x| ((c + y * x) % 7) as f64 / 7.0);
        let (a, r) = align_for_pyramid(&img, 4);
        assert_eq!(a, img);
        assert_eq!(restore(r, &a), img);

        let (a, r) = align_for_pyramid(&Image::zeros(250, 200), 2);
        assert_eq!((a.height(), a.width()), (252, 200));
        assert_eq!(r, RestoreRecipe { height: 250, width: 200 });
    }

    #[test]
    fn down_up_keeps_resolution() {
        let img = Image::from_fn(255, 255, |c, y, x| ((c * 31 + y * 7 + x) % 13) as f64 / 13.0);
        let out = down_up(&img, 4).unwrap();
        assert_eq!((out.height(), out.width()), (255, 255));
    }
}
