//! Evaluates a victim in every ablation mode and prints the comparison table.
//!
//! Trains a full network and a network without RSE blocks for a few steps
//! each, then runs clean, down-up, no-RSE and full-attack evaluation.
//!
//! `cargo run --release --example ablation [attack_steps]`

use ad2attack::config::Config;
use ad2attack::evaluation::{aggregate, render_table, run_all, AttackMode, TimingSummary};
use ad2attack::resample::{PyramidConfig, SruNetwork};
use ad2attack::synth::{generate_corpus, SynthConfig};
use ad2attack::training::{train, TrainConfig, TrainingCorpus};
use ad2attack::victim::pretrain::{pretrain_victim, VictimTrainConfig};
use ad2attack::victim::{ToyTracker, VictimConfig};

fn main() -> ad2attack::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let synth = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let train_seqs = generate_corpus(&synth, 1, 8)?;
    let eval_seqs = generate_corpus(&synth, 2, 4)?;
    let mut victim = ToyTracker::new(VictimConfig::default(), 0)?;
    pretrain_victim(
        &mut victim,
        &train_seqs,
        &VictimTrainConfig {
            steps: 600,
            ..VictimTrainConfig::default()
        },
    )?;

    let corpus = TrainingCorpus::from_sequences(train_seqs, 10)?;
    let cfg = TrainConfig {
        steps,
        ..Config::default().train
    };
    let mut nets = Vec::new();
    for rse in [true, false] {
        let pyramid = PyramidConfig {
            levels: 3,
            convs_per_block: 2,
            feature_channels: 16,
            group_count: 4,
            attention_kernel: 7,
            rse,
        };
        nets.push(train(&corpus, &victim, SruNetwork::new(pyramid, 7)?, &cfg, None, |_| {})?.network);
    }

    let clean = aggregate(&run_all(&victim, &eval_seqs, AttackMode::Clean, None, 1)?);
    let mut rows = Vec::new();
    for mode in [AttackMode::DownUp, AttackMode::NoRse, AttackMode::Attack] {
        let net = if mode == AttackMode::NoRse { &nets[1] } else { &nets[0] };
        let runs = run_all(&victim, &eval_seqs, mode, Some(net), 1)?;
        if mode == AttackMode::Attack {
            let t = TimingSummary::from_runs(&runs);
            println!("attack latency: mean {:.2} ms, p95 {:.2} ms ({:.0} fps)", t.mean_ms, t.p95_ms, t.fps);
        }
        rows.push((mode, aggregate(&runs)));
    }
    print!("{}", render_table(&clean, &rows));
    Ok(())
}
