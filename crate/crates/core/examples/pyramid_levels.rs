//! Pyramid depth selection and the non-adversarial down-up baseline.
//!
//! Shows how the number of levels follows the search region's share of the
//! frame, and how much a plain decimate-and-upsample round trip changes a
//! patch at each depth.
//!
//! `cargo run --release --example pyramid_levels`

use ad2attack::geometry::SearchGeometry;
use ad2attack::image::Image;
use ad2attack::resample::{adaptive_pyramid_levels, down_up, raw_pyramid_levels};

fn main() -> ad2attack::Result<()> {
    println!("{:>8} {:>12} {:>10} {:>5} {:>7}", "patch", "frame", "Q", "raw", "levels");
    for (patch, frame) in [(20.0, (720, 1280)), (60.0, (720, 1280)), (255.0, (720, 1280)), (128.0, (256, 256)), (300.0, (320, 320))] {
        let g = SearchGeometry::new(255, patch, patch, frame.0, frame.1)?;
        println!(
            "{:>8} {:>12} {:>10.5} {:>5} {:>7}",
            patch,
            format!("{}x{}", frame.0, frame.1),
            g.area_fraction(),
            raw_pyramid_levels(&g)?,
            adaptive_pyramid_levels(&g)?
        );
    }

    // A striped patch loses more detail the deeper the pyramid.
    let patch = Image::from_fn(64, 64, |c, y, x| 0.5 + 0.4 * (((x + 2 * y + c) as f64) * 0.25).sin());
    println!("\nmean |down-up - clean| on a 64x64 striped patch");
    for levels in 1..=5 {
        let du = down_up(&patch, levels)?;
        println!("  {levels} level(s): {:.4}", du.mean_abs_diff(&patch));
    }
    Ok(())
}
