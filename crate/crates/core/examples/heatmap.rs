//! Saliency heatmaps of the victim on a clean and a resampled search patch.
//!
//! Writes `heatmap_clean.png` and `heatmap_attacked.png` to the given
//! directory (a temporary one by default) and prints the share of strongly
//! responding pixels in each.
//!
//! `cargo run --release --example heatmap [out_dir]`

use ad2attack::evaluation::{colorize, heatmap, high_response_fraction, perturb, AttackMode};
use ad2attack::resample::{PyramidConfig, SruNetwork};
use ad2attack::synth::{generate_sequence, SynthConfig};
use ad2attack::victim::pretrain::{pretrain_victim, VictimTrainConfig};
use ad2attack::victim::{crop_search_patch, init_template, ToyTracker, VictimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&out)?;

    let synth = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let seq = generate_sequence(&synth, 3, 0)?;
    let mut victim = ToyTracker::new(VictimConfig::default(), 0)?;
    pretrain_victim(
        &mut victim,
        std::slice::from_ref(&seq),
        &VictimTrainConfig {
            steps: 300,
            ..VictimTrainConfig::default()
        },
    )?;
    let net = SruNetwork::new(
        PyramidConfig {
            levels: 3,
            convs_per_block: 1,
            feature_channels: 8,
            group_count: 4,
            attention_kernel: 7,
            rse: true,
        },
        1,
    )?;

    let gt = seq.groundtruth();
    let template = init_template(&victim, &seq.frame(0)?, &gt[0])?;
    let (clean, geom) = crop_search_patch(&seq.frame(5)?, &gt[4], victim.config().search_size, victim.config().context_search)?;
    // An untrained network resamples without adversarial residuals.
    let resampled = perturb(&clean, &geom, AttackMode::Attack, Some(&net))?;
    for (name, patch) in [("clean", &clean), ("attacked", &resampled)] {
        let map = heatmap(&victim, &template, patch)?;
        colorize(&map).save(out.join(format!("heatmap_{name}.png")))?;
        println!("{name}: {:.3} of pixels above 0.5", high_response_fraction(&map, 0.5));
    }
    println!("heatmaps written to {}", out.display());
    Ok(())
}
