//! Score + regression maps → box in frame coordinates.

use super::maps::{RegressionMap, ScoreMap};
use crate::error::{Error, Result};
use crate::geometry::{BBox, SearchGeometry};

/// Index of the most confident cell.
///
/// Ties on target probability go to the cell closest to the grid centre,
/// then to the smallest row-major index.
pub fn best_cell(score: &ScoreMap) -> usize {
    let (h, w) = score.grid();
    let (ci, cj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let dist = |idx: usize| {
        let (i, j) = ((idx / w) as f64, (idx % w) as f64);
        (i - ci).powi(2) + (j - cj).powi(2)
    };
    let mut best = 0;
    let mut best_p = score.target_prob(0);
    for idx in 1..h * w {
        let p = score.target_prob(idx);
        if p > best_p || (p == best_p && dist(idx) < dist(best)) {
            best = idx;
            best_p = p;
        }
    }
    best
}

/// Decodes the box at the best cell.
///
/// Centre = previous centre + (cell offset from grid centre + `R(x), R(y)`)
/// × `stride` patch pixels, mapped to frame pixels; size = previous size
/// × `exp(R(w))`, `exp(R(h))`.
pub fn decode_box(score: &ScoreMap, reg: &RegressionMap, geom: &SearchGeometry, prev_box: &BBox, stride: f64) -> Result<BBox> {
    if score.grid() != reg.grid() {
        return Err(Error::invalid("score and regression grids disagree"));
    }
    let (h, w) = score.grid();
    let idx = best_cell(score);
    let (i, j) = (idx / w, idx % w);
    let [rx, ry, rw, rh] = reg.at(idx);
    let cell = stride * geom.scale;
    let dx = (j as f64 - (w as f64 - 1.0) / 2.0 + rx) * cell;
    let dy = (i as f64 - (h as f64 - 1.0) / 2.0 + ry) * cell;
    BBox::new(prev_box.cx + dx, prev_box.cy + dy, prev_box.w * rw.exp(), prev_box.h * rh.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> SearchGeometry {
        let mut g = SearchGeometry::new(64, 128.0, 128.0, 256, 256).unwrap();
        g.scale = 2.0;
        g
    }

    fn prev() -> BBox {
        BBox::new(100.0, 120.0, 20.0, 30.0).unwrap()
    }

    #[test]
    fn uniform_map_returns_centre_cell_and_previous_size() {
        let s = ScoreMap::from_fn(9, 9, |_, _| (0.3, 0.3)).unwrap();
        let b = decode_box(&s, &RegressionMap::zeros(9, 9), &geom(), &prev(), 4.0).unwrap();
        assert_eq!(b, prev());
    }

    #[test]
    fn spike_at_origin_decodes_to_top_left_cell() {
        let s = ScoreMap::from_fn(9, 9, |i, j| if (i, j) == (0, 0) { (0.0, 5.0) } else { (0.0, -5.0) }).unwrap();
        let b = decode_box(&s, &RegressionMap::zeros(9, 9), &geom(), &prev(), 4.0).unwrap();
        // 4 cells up and left, 4 px per cell in the patch, 2 frame px per patch px.
        assert_eq!((b.cx, b.cy), (100.0 - 32.0, 120.0 - 32.0));
    }

    #[test]
    fn log_two_doubles_the_size() {
        let s = ScoreMap::from_fn(5, 5, |_, _| (0.0, 0.0)).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let r = RegressionMap::from_fn(5, 5, |_, _| [0.0, 0.0, ln2, ln2]).unwrap();
        let b = decode_box(&s, &r, &geom(), &prev(), 4.0).unwrap();
        assert!((b.w - 40.0).abs() < 1e-12 && (b.h - 60.0).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let s = ScoreMap::from_fn(5, 5, |_, _| (0.0, 0.0)).unwrap();
        assert!(decode_box(&s, &RegressionMap::zeros(4, 5), &geom(), &prev(), 4.0).is_err());
    }
}
