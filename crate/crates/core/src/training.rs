//! Generator training against a frozen victim.
//!
//! The corpus samples every `cadence`-th frame of each sequence. Each item
//! yields a clean search patch cropped around the previous frame's
//! ground-truth box plus the sequence's first-frame template. Clean victim
//! responses never change during training, so they are computed once.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{total_loss_terms, AttackConfig, LossBreakdown};
use crate::nn::{mean_grads, Adam, ParamStore};
use crate::resample::{attack_levels, SruNetwork};
use crate::tensor::Tensor;
use crate::victim::{crop_search_patch, init_template, respond, ScoreMap, Template, ToyTracker};

/// One training sample: a frame of a sequence, addressed by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub sequence: usize,
    pub frame: usize,
}

#[derive(Clone, Debug)]
pub struct TrainingCorpus {
    pub sequences: Vec<Sequence>,
    pub items: Vec<CorpusItem>,
    pub cadence: usize,
}

impl TrainingCorpus {
    pub fn from_sequences(sequences: Vec<Sequence>, cadence: usize) -> Result<Self> {
        if cadence == 0 {
            return Err(Error::config("corpus cadence must be positive"));
        }
        let items: Vec<CorpusItem> = sequences
            .iter()
            .enumerate()
            .flat_map(|(s, seq)| (0..seq.len()).step_by(cadence).map(move |frame| CorpusItem { sequence: s, frame }))
            .collect();
        if items.is_empty() {
            return Err(Error::config("training corpus is empty"));
        }
        Ok(Self {
            sequences,
            items,
            cadence,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Opens each sequence directory and samples every `cadence`-th frame.
pub fn build_corpus(sequence_dirs: &[PathBuf], cadence: usize) -> Result<TrainingCorpus> {
    let sequences = sequence_dirs.iter().map(|d| Sequence::open(d)).collect::<Result<Vec<_>>>()?;
    TrainingCorpus::from_sequences(sequences, cadence)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Threads computing per-sample gradients; results do not depend on it.
    pub workers: usize,
    /// Keep a copy of the network every this many completed steps; 0 disables.
    pub snapshot_every: usize,
    pub attack: AttackConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            lr: 2e-4,
            seed: 0,
            workers: 1,
            snapshot_every: 0,
            attack: AttackConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive and finite"));
        }
        self.attack.validate()
    }
}

/// Batch-mean loss components of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub score: f64,
    pub drift: f64,
    pub perceptibility: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last step.
    pub network: SruNetwork,
    /// Parameters at the lowest batch total loss seen (the input network if no step ran).
    pub best: SruNetwork,
    pub best_step: Option<usize>,
    pub history: Vec<LossRecord>,
    /// `(completed steps, network)` pairs taken every `snapshot_every` steps.
    pub snapshots: Vec<(usize, SruNetwork)>,
    pub victim_fingerprint: String,
}

/// A corpus item with everything that does not depend on the generator.
struct Prepared {
    item: CorpusItem,
    clean: Image,
    clean_tensor: Tensor,
    levels: usize,
    template: Template,
    clean_score: ScoreMap,
}

fn prepare(corpus: &TrainingCorpus, victim: &ToyTracker, net: &SruNetwork) -> Result<Vec<Prepared>> {
    let vc = victim.config();
    let mut templates: Vec<Option<Template>> = vec![None; corpus.sequences.len()];
    let mut out = Vec::with_capacity(corpus.items.len());
    for &item in &corpus.items {
        let seq = &corpus.sequences[item.sequence];
        let gt = seq.groundtruth();
        if templates[item.sequence].is_none() {
            templates[item.sequence] = Some(init_template(victim, &seq.frame(0)?, &gt[0])?);
        }
        let template = templates[item.sequence].clone().expect("template just cached");
        let frame = seq.frame(item.frame)?;
        let centre = gt[item.frame.saturating_sub(1)];
        let (clean, geom) = crop_search_patch(&frame, &centre, vc.search_size, vc.context_search)?;
        let (clean_score, _) = respond(victim, &template, &clean)?;
        out.push(Prepared {
            item,
            clean_tensor: clean.to_tensor(),
            levels: attack_levels(&geom, net)?,
            clean,
            template,
            clean_score,
        });
    }
    Ok(out)
}

fn sample_grads(
    net: &SruNetwork,
    victim: &ToyTracker,
    p: &Prepared,
    cfg: &AttackConfig,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let svars = net.params().bind(&mut tape, true);
    let vvars = victim.params().bind(&mut tape, false);
    let adv = net.attack_on_tape(&mut tape, &svars, &p.clean, p.levels)?;
    let z = tape.constant(p.template.features.clone());
    let (cls, reg) = victim.heads_on_tape(&mut tape, &vvars, z, adv);
    let adv_score = ScoreMap::new(tape.value(cls).clone())?;
    let adv_reg = crate::victim::RegressionMap::new(tape.value(reg).clone())?;
    let loss = total_loss_terms(&p.clean_tensor, tape.value(adv), &p.clean_score, &adv_score, &adv_reg, cfg)?;
    let grads = tape.backward(&[(cls, loss.grad_score), (reg, loss.grad_regression), (adv, loss.grad_patch)]);
    Ok((loss.breakdown, net.params().collect_grads(&svars, &grads)))
}

fn batch_grads(
    net: &SruNetwork,
    victim: &ToyTracker,
    batch: &[&Prepared],
    cfg: &AttackConfig,
    workers: usize,
) -> Result<Vec<(LossBreakdown, Vec<Tensor>)>> {
    if workers <= 1 {
        return batch.iter().map(|p| sample_grads(net, victim, p, cfg)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| batch.par_iter().map(|p| sample_grads(net, victim, p, cfg)).collect())
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    step: usize,
    items: Vec<CorpusItem>,
    losses: &'a [LossBreakdown],
}

/// Trains `net` against the frozen `victim`.
///
/// `on_step` sees every loss record as it is produced. If a batch loss is
/// not finite, training stops with [`Error::NonFinite`]; when `dump_dir` is
/// given the offending batch is described in `nonfinite_step_N.json` there.
pub fn train(
    corpus: &TrainingCorpus,
    victim: &ToyTracker,
    net: SruNetwork,
    cfg: &TrainConfig,
    dump_dir: Option<&Path>,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let fingerprint = victim.params().fingerprint();
    let prepared = prepare(corpus, victim, &net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut net = net;
    let mut opt = Adam::new(cfg.lr, net.params());
    let mut best: (Option<usize>, f64, ParamStore) = (None, f64::INFINITY, net.params().clone());
    let mut history = Vec::with_capacity(cfg.steps);
    let mut snapshots = Vec::new();

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..prepared.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&prepared[order[cursor]]);
            cursor += 1;
        }
        let results = batch_grads(&net, victim, &batch, &cfg.attack, cfg.workers)?;
        let n = results.len() as f64;
        let (mut score, mut drift, mut l2) = (0.0, 0.0, 0.0);
        for (b, _) in &results {
            score += b.score;
            drift += b.drift;
            l2 += b.perceptibility;
        }
        let (score, drift, perceptibility) = (score / n, drift / n, l2 / n);
        let record = LossRecord {
            step,
            score,
            drift,
            perceptibility,
            total: score + drift + perceptibility,
        };
        if !record.total.is_finite() {
            let losses: Vec<LossBreakdown> = results.iter().map(|(b, _)| *b).collect();
            if let Some(dir) = dump_dir {
                let diag = Diagnostic {
                    step,
                    items: batch.iter().map(|p| p.item).collect(),
                    losses: &losses,
                };
                let path = dir.join(format!("nonfinite_step_{step}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&diag)?).map_err(|e| Error::io(&path, e))?;
            }
            return Err(Error::NonFinite {
                step,
                detail: format!("batch items {:?}", batch.iter().map(|p| p.item).collect::<Vec<_>>()),
            });
        }
        log::debug!(
            "step {step} score {:.5} drift {:.5} l2 {:.5} total {:.5}",
            record.score,
            record.drift,
            record.perceptibility,
            record.total
        );
        on_step(&record);
        history.push(record);

        let grads = mean_grads(results.into_iter().map(|(_, g)| g).collect());
        if record.total < best.1 {
            // The record describes the parameters before this update.
            best = (Some(step), record.total, net.params().clone());
        }
        opt.step(net.params_mut(), &grads);
        if cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0 {
            snapshots.push((step + 1, net.clone()));
        }
    }

    if victim.params().fingerprint() != fingerprint {
        return Err(Error::invariant("victim parameters changed during attack training"));
    }
    let mut best_net = net.clone();
    best_net.load_params(best.2)?;
    Ok(TrainOutcome {
        network: net,
        best: best_net,
        best_step: best.0,
        history,
        snapshots,
        victim_fingerprint: fingerprint,
    })
}
