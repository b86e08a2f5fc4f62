//! Generates a small procedural corpus, writes it in the on-disk sequence
//! format and reads it back.
//!
//! `cargo run --release --example synth_corpus [out_dir]`

use ad2attack::dataset::open_all;
use ad2attack::synth::{write_corpus, SynthConfig};

fn main() -> ad2attack::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = out.unwrap_or_else(|| tmp.path().to_path_buf());

    let cfg = SynthConfig {
        frames: 20,
        ..SynthConfig::default()
    };
    let ids = write_corpus(&cfg, 42, 3, &root)?;
    println!("wrote {} sequences under {}", ids.len(), root.display());

    for seq in open_all(&root)? {
        let gt = seq.groundtruth();
        let (first, last) = (gt[0], gt[gt.len() - 1]);
        println!(
            "{}: {} frames of {:?}, target ({:.1},{:.1}) {:.1}x{:.1} -> ({:.1},{:.1}) {:.1}x{:.1}",
            seq.id(),
            seq.len(),
            seq.frame_size()?,
            first.cx,
            first.cy,
            first.w,
            first.h,
            last.cx,
            last.cy,
            last.w,
            last.h
        );
    }
    Ok(())
}
