//! Trains the resampling network against a frozen victim and compares the
//! victim's tracking before and after the attack.
//!
//! `cargo run --release --example train_attack [attack_steps]`

use ad2attack::config::Config;
use ad2attack::evaluation::{aggregate, delta_percent, run_all, AttackMode};
use ad2attack::resample::{PyramidConfig, SruNetwork};
use ad2attack::synth::{generate_corpus, SynthConfig};
use ad2attack::training::{train, TrainConfig, TrainingCorpus};
use ad2attack::victim::pretrain::{pretrain_victim, VictimTrainConfig};
use ad2attack::victim::{ToyTracker, VictimConfig};

fn main() -> ad2attack::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let synth = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let train_seqs = generate_corpus(&synth, 1, 8)?;
    let eval_seqs = generate_corpus(&synth, 2, 4)?;

    let mut victim = ToyTracker::new(VictimConfig::default(), 0)?;
    let vcfg = VictimTrainConfig {
        steps: 600,
        ..VictimTrainConfig::default()
    };
    pretrain_victim(&mut victim, &train_seqs, &vcfg)?;

    let pyramid = PyramidConfig {
        levels: 3,
        convs_per_block: 2,
        feature_channels: 16,
        group_count: 4,
        attention_kernel: 7,
        rse: true,
    };
    let corpus = TrainingCorpus::from_sequences(train_seqs, 10)?;
    let cfg = TrainConfig {
        steps,
        ..Config::default().train
    };
    let outcome = train(&corpus, &victim, SruNetwork::new(pyramid, 7)?, &cfg, None, |r| {
        if r.step % 25 == 0 {
            println!(
                "step {:>4}: score {:+.4} drift {:+.4} perceptibility {:.4} total {:+.4}",
                r.step, r.score, r.drift, r.perceptibility, r.total
            );
        }
    })?;

    let clean = aggregate(&run_all(&victim, &eval_seqs, AttackMode::Clean, None, 1)?);
    let attacked = aggregate(&run_all(&victim, &eval_seqs, AttackMode::Attack, Some(&outcome.network), 1)?);
    println!(
        "precision {:.3} -> {:.3} ({:+.1}%), success {:.3} -> {:.3} ({:+.1}%), mean |perturbation| {:.4}",
        clean.precision,
        attacked.precision,
        delta_percent(clean.precision, attacked.precision),
        clean.success_auc,
        attacked.success_auc,
        delta_percent(clean.success_auc, attacked.success_auc),
        attacked.mean_perturbation_abs
    );
    Ok(())
}
