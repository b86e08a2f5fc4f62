//! Supervised pretraining of the toy victim on clean sequences.
//!
//! Each sample pairs the sequence's first-frame template with a search patch
//! cropped around a jittered copy of a later ground-truth box. Cells near the
//! true centre are positives, distant cells negatives; the objective is a
//! class-balanced cross-entropy on the score map plus smooth-L1 on the
//! regression map at positive cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crop::crop_search_patch;
use super::tracker::ToyTracker;
use crate::autograd::{sigmoid, Tape};
use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::geometry::{BBox, SearchGeometry};
use crate::image::Image;
use crate::nn::{mean_grads, Adam};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Search-centre jitter as a fraction of `sqrt(w·h)`.
    pub shift: f64,
    /// Log-scale jitter of the reference box (shared by width and height).
    pub scale_jitter: f64,
    /// Cells within this distance (in cells) of the true centre are positive.
    pub pos_radius: f64,
    /// Cells beyond this distance are negative; the band in between is ignored.
    pub neg_radius: f64,
    pub reg_weight: f64,
    /// Probability of blurring a search patch by bilinear down- and up-scaling.
    pub blur_prob: f64,
    /// Largest down-scaling factor of the blur augmentation.
    pub blur_max_factor: f64,
}

impl Default for VictimTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 8,
            lr: 2e-3,
            seed: 0,
            shift: 0.5,
            scale_jitter: 0.3,
            pos_radius: 1.5,
            neg_radius: 2.5,
            reg_weight: 3.0,
            blur_prob: 0.3,
            blur_max_factor: 3.0,
        }
    }
}

impl VictimTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("victim batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("victim lr must be positive"));
        }
        if !(self.pos_radius > 0.0 && self.neg_radius >= self.pos_radius) {
            return Err(Error::config("need 0 < pos_radius ≤ neg_radius"));
        }
        if !(0.0..=1.0).contains(&self.blur_prob) || !(self.blur_max_factor >= 1.0) {
            return Err(Error::config("blur_prob must lie in [0,1] and blur_max_factor be ≥ 1"));
        }
        if !(self.shift >= 0.0 && self.scale_jitter >= 0.0 && self.reg_weight >= 0.0) {
            return Err(Error::config("jitter and weights must be non-negative"));
        }
        Ok(())
    }
}

/// Per-cell supervision for one search patch.
#[derive(Clone, Debug, PartialEq)]
pub struct VictimTargets {
    /// `1` positive, `0` negative, `-1` ignored.
    pub labels: Vec<i8>,
    /// `(x, y, w, h)` regression targets, meaningful at positive cells.
    pub regression: Vec<[f64; 4]>,
}

/// Labels the response grid for a patch cropped around `reference`.
pub fn make_targets(gt: &BBox, reference: &BBox, geom: &SearchGeometry, stride: f64, grid: usize, cfg: &VictimTrainConfig) -> VictimTargets {
    let centre = (grid as f64 - 1.0) / 2.0;
    let cell = stride * geom.scale;
    let tj = centre + (gt.cx - reference.cx) / cell;
    let ti = centre + (gt.cy - reference.cy) / cell;
    let (lw, lh) = ((gt.w / reference.w).ln(), (gt.h / reference.h).ln());
    let mut labels = Vec::with_capacity(grid * grid);
    let mut regression = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let (di, dj) = (ti - i as f64, tj - j as f64);
            let d = (di * di + dj * dj).sqrt();
            labels.push(if d <= cfg.pos_radius {
                1
            } else if d > cfg.neg_radius {
                0
            } else {
                -1
            });
            regression.push([dj, di, lw, lh]);
        }
    }
    VictimTargets { labels, regression }
}

/// Balanced cross-entropy + smooth-L1. Returns `(loss, d/d logits, d/d regression)`.
pub fn victim_loss(logits: &Tensor, regression: &Tensor, targets: &VictimTargets, reg_weight: f64) -> (f64, Tensor, Tensor) {
    let cells = targets.labels.len();
    let n_pos = targets.labels.iter().filter(|l| **l == 1).count();
    let n_neg = targets.labels.iter().filter(|l| **l == 0).count();
    let (w_pos, w_neg) = match (n_pos, n_neg) {
        (0, 0) => (0.0, 0.0),
        (0, n) => (0.0, 1.0 / n as f64),
        (p, 0) => (1.0 / p as f64, 0.0),
        (p, n) => (0.5 / p as f64, 0.5 / n as f64),
    };
    let l = logits.data();
    let r = regression.data();
    let mut g_cls = Tensor::zeros(logits.shape());
    let mut g_reg = Tensor::zeros(regression.shape());
    let mut loss = 0.0;
    for idx in 0..cells {
        let (b, t) = (l[idx], l[cells + idx]);
        let (y, w) = match targets.labels[idx] {
            1 => (1.0, w_pos),
            0 => (0.0, w_neg),
            _ => continue,
        };
        let z = t - b;
        // -log sigmoid(±z) computed stably.
        let s = if y == 1.0 { z } else { -z };
        loss += w * (if s > 0.0 { (-s).exp().ln_1p() } else { -s + s.exp().ln_1p() });
        let d = w * (sigmoid(z) - y);
        g_cls.data_mut()[cells + idx] += d;
        g_cls.data_mut()[idx] -= d;
    }
    if n_pos > 0 && reg_weight > 0.0 {
        let k = reg_weight / n_pos as f64;
        for idx in (0..cells).filter(|i| targets.labels[*i] == 1) {
            for c in 0..4 {
                let d = r[c * cells + idx] - targets.regression[idx][c];
                let (v, g) = if d.abs() < 1.0 { (0.5 * d * d, d) } else { (d.abs() - 0.5, d.signum()) };
                loss += k * v;
                g_reg.data_mut()[c * cells + idx] += k * g;
            }
        }
    }
    (loss, g_cls, g_reg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimLossRecord {
    pub step: usize,
    pub loss: f64,
}

struct Sample {
    template: Image,
    search: Image,
    targets: VictimTargets,
}

fn draw_sample(tracker: &ToyTracker, sequences: &[Sequence], templates: &[Image], cfg: &VictimTrainConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let s = rng.gen_range(0..sequences.len());
    let seq = &sequences[s];
    let k = rng.gen_range(0..seq.len());
    let gt = seq.groundtruth()[k];
    let frame = seq.frame(k)?;
    let size = (gt.w * gt.h).sqrt();
    let jitter = |rng: &mut ChaCha8Rng, amp: f64| if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };
    // One shared factor: the reference aspect is not visible in a square
    // crop, so independent w/h jitter would ask for unobservable corrections.
    let dx = jitter(rng, cfg.shift) * size;
    let dy = jitter(rng, cfg.shift) * size;
    let f = jitter(rng, cfg.scale_jitter).exp();
    let reference = BBox::new(gt.cx + dx, gt.cy + dy, gt.w * f, gt.h * f)?;
    let vc = tracker.config();
    let (mut search, geom) = crop_search_patch(&frame, &reference, vc.search_size, vc.context_search)?;
    if cfg.blur_prob > 0.0 && rng.gen_bool(cfg.blur_prob) && cfg.blur_max_factor > 1.0 {
        let n = vc.search_size as f64 / rng.gen_range(1.0..cfg.blur_max_factor);
        let small = (n.round() as usize).max(1);
        search = search.resize(small, small).resize(vc.search_size, vc.search_size);
    }
    let targets = make_targets(&gt, &reference, &geom, vc.total_stride() as f64, vc.grid_size(), cfg);
    Ok(Sample {
        template: templates[s].clone(),
        search,
        targets,
    })
}

fn sample_grads(tracker: &ToyTracker, sample: &Sample, reg_weight: f64) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars = tracker.params().bind(&mut tape, true);
    let z = tape.constant(sample.template.to_tensor());
    let x = tape.constant(sample.search.to_tensor());
    let zf = tracker.embed_on_tape(&mut tape, &vars, z);
    let (cls, reg) = tracker.heads_on_tape(&mut tape, &vars, zf, x);
    let (loss, g_cls, g_reg) = victim_loss(tape.value(cls), tape.value(reg), &sample.targets, reg_weight);
    let grads = tape.backward(&[(cls, g_cls), (reg, g_reg)]);
    (loss, tracker.params().collect_grads(&vars, &grads))
}

/// Trains `tracker` in place and returns the per-step mean loss.
pub fn pretrain_victim(tracker: &mut ToyTracker, sequences: &[Sequence], cfg: &VictimTrainConfig) -> Result<Vec<VictimLossRecord>> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::config("victim pretraining needs at least one sequence"));
    }
    let vc = tracker.config().clone();
    let templates = sequences
        .iter()
        .map(|seq| {
            let frame = seq.frame(0)?;
            crop_search_patch(&frame, &seq.groundtruth()[0], vc.template_size, vc.context_template).map(|(p, _)| p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr, tracker.params());
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut per_sample = Vec::with_capacity(cfg.batch_size);
        let mut total = 0.0;
        for _ in 0..cfg.batch_size {
            let sample = draw_sample(tracker, sequences, &templates, cfg, &mut rng)?;
            let (loss, grads) = sample_grads(tracker, &sample, cfg.reg_weight);
            total += loss;
            per_sample.push(grads);
        }
        let loss = total / cfg.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: "victim pretraining loss".into(),
            });
        }
        opt.step(tracker.params_mut(), &mean_grads(per_sample));
        history.push(VictimLossRecord { step, loss });
        if step % 100 == 0 {
            log::info!("victim step {step}: loss {loss:.4}");
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SynthConfig};
    use crate::victim::VictimConfig;

    fn geom() -> SearchGeometry {
        let mut g = SearchGeometry::new(64, 64.0, 64.0, 256, 256).unwrap();
        g.scale = 1.0;
        g
    }

    #[test]
    fn centred_target_labels_the_centre_cell() {
        let b = BBox::new(100.0, 100.0, 16.0, 16.0).unwrap();
        let t = make_targets(&b, &b, &geom(), 4.0, 9, &VictimTrainConfig::default());
        assert_eq!(t.labels[40], 1);
        assert_eq!(t.regression[40], [0.0, 0.0, 0.0, 0.0]);
        // (4,5) is one cell right: positive; (4,8) four cells right: negative; (4,6) in the ignore band.
        assert_eq!((t.labels[41], t.labels[44], t.labels[42]), (1, 0, -1));
    }

    #[test]
    fn offset_target_moves_the_label_and_offsets() {
        let gt = BBox::new(108.0, 100.0, 32.0, 16.0).unwrap();
        let reference = BBox::new(100.0, 100.0, 16.0, 16.0).unwrap();
        let t = make_targets(&gt, &reference, &geom(), 4.0, 9, &VictimTrainConfig::default());
        // Eight pixels at scale 1, stride 4 → two cells right.
        assert_eq!(t.labels[42], 1);
        assert_eq!(t.regression[42][0], 0.0);
        assert!((t.regression[42][2] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn victim_loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect() };
        let logits = Tensor::from_vec(&[2, 3, 3], rand(18));
        let reg = Tensor::from_vec(&[4, 3, 3], rand(36));
        let targets = VictimTargets {
            labels: vec![0, 0, -1, 0, 1, 1, 0, -1, 0],
            regression: (0..9).map(|i| [0.1 * i as f64, -0.2, 0.3, 1.7]).collect(),
        };
        let (_, gc, gr) = victim_loss(&logits, &reg, &targets, 1.0);
        let h = 1e-6;
        for (t, g, is_cls) in [(&logits, &gc, true), (&reg, &gr, false)] {
            for i in 0..t.len() {
                let mut plus = t.clone();
                plus.data_mut()[i] += h;
                let mut minus = t.clone();
                minus.data_mut()[i] -= h;
                let f = |x: &Tensor| {
                    if is_cls {
                        victim_loss(x, &reg, &targets, 1.0).0
                    } else {
                        victim_loss(&logits, x, &targets, 1.0).0
                    }
                };
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                assert!((fd - g.data()[i]).abs() < 1e-6, "index {i}: fd {fd} vs {}", g.data()[i]);
            }
        }
    }

    #[test]
    fn short_pretraining_reduces_the_loss() {
        let synth = SynthConfig {
            frame_width: 128,
            frame_height: 128,
            frames: 10,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&synth, 1, 2).unwrap();
        let mut tracker = ToyTracker::new(VictimConfig::default(), 0).unwrap();
        let cfg = VictimTrainConfig {
            steps: 40,
            batch_size: 2,
            ..VictimTrainConfig::default()
        };
        let hist = pretrain_victim(&mut tracker, &corpus, &cfg).unwrap();
        let head: f64 = hist[..10].iter().map(|r| r.loss).sum();
        let tail: f64 = hist[30..].iter().map(|r| r.loss).sum();
        assert!(tail < head, "loss did not fall: {head} → {tail}");
    }
}
