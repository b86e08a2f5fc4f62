//! Pretrains the toy Siamese victim on synthetic sequences and checks its
//! clean tracking quality.
//!
//! `cargo run --release --example train_victim [steps]`

use ad2attack::evaluation::{aggregate, run_all, AttackMode};
use ad2attack::synth::{generate_corpus, SynthConfig};
use ad2attack::victim::pretrain::{pretrain_victim, VictimTrainConfig};
use ad2attack::victim::{ToyTracker, VictimConfig};

fn main() -> ad2attack::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let synth = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let train = generate_corpus(&synth, 1, 8)?;
    let eval = generate_corpus(&synth, 2, 4)?;

    let mut victim = ToyTracker::new(VictimConfig::default(), 0)?;
    let before = aggregate(&run_all(&victim, &eval, AttackMode::Clean, None, 1)?);
    let cfg = VictimTrainConfig {
        steps,
        ..VictimTrainConfig::default()
    };
    let history = pretrain_victim(&mut victim, &train, &cfg)?;
    let window = history.len().min(50);
    let tail: f64 = history[history.len() - window..].iter().map(|r| r.loss).sum::<f64>() / window as f64;
    println!("loss {:.3} -> {:.3} over {steps} steps", history[0].loss, tail);

    let after = aggregate(&run_all(&victim, &eval, AttackMode::Clean, None, 1)?);
    println!(
        "clean mean IoU {:.3} -> {:.3}, precision {:.3} -> {:.3}",
        before.mean_iou, after.mean_iou, before.precision, after.precision
    );
    Ok(())
}
