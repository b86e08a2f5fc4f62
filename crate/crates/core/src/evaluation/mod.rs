//! One-pass evaluation with and without the attack.
//!
//! A run initialises the tracker from the first ground-truth box and never
//! re-initialises. Every later frame is cropped around the previous
//! prediction, optionally perturbed, and tracked.

mod heatmap;
mod metrics;
mod report;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use heatmap::{colorize, heatmap, high_response_fraction, Heatmap};
pub use metrics::{
    aggregate, delta_percent, render_csv, render_table, success_thresholds, MetricReport, PRECISION_THRESHOLD_PX,
};
pub use report::{curves_csv, RunReport, TimingSummary, RUN_FORMAT};

use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::Image;
use crate::resample::{attack_levels, down_up, SruNetwork, MAX_LEVELS};
use crate::resample::adaptive_pyramid_levels;
use crate::victim::{crop_search_patch, init_template, track_step, SiameseTracker};

/// Smallest side a predicted box is clamped to, in frame pixels.
pub const MIN_BOX_SIDE: f64 = 2.0;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Centre location error in pixels.
pub fn cle(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    Clean,
    DownUp,
    NoRse,
    Attack,
}

impl AttackMode {
    pub const ALL: [AttackMode; 4] = [AttackMode::Clean, AttackMode::DownUp, AttackMode::NoRse, AttackMode::Attack];

    pub fn name(self) -> &'static str {
        match self {
            AttackMode::Clean => "clean",
            AttackMode::DownUp => "down-up",
            AttackMode::NoRse => "no-rse",
            AttackMode::Attack => "attack",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s:?} (expected clean, down-up, no-rse or attack)")))
    }

    pub fn needs_network(self) -> bool {
        matches!(self, AttackMode::NoRse | AttackMode::Attack)
    }
}

/// Per-frame record of one sequence evaluated in one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub sequence: String,
    pub mode: AttackMode,
    pub boxes: Vec<BBox>,
    pub iou: Vec<f64>,
    pub cle: Vec<f64>,
    /// Wall time of the perturbation step; zero on the initial frame.
    pub latency_ms: Vec<f64>,
    /// `‖adv − clean‖₂ / N` over the search patch, `N` = pixels × channels.
    pub perturbation_l2: Vec<f64>,
    /// Mean absolute difference between adversarial and clean search patch.
    pub perturbation_abs: Vec<f64>,
    /// Set when the run stopped early; the series then cover only the processed frames.
    pub aborted: Option<String>,
}

impl TrackingRun {
    pub fn frames(&self) -> usize {
        self.iou.len()
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.iou)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.iou.len();
        let lens = [
            self.boxes.len(),
            self.cle.len(),
            self.latency_ms.len(),
            self.perturbation_l2.len(),
            self.perturbation_abs.len(),
        ];
        if lens.iter().any(|l| *l != n) {
            return Err(Error::invariant("tracking-run series differ in length"));
        }
        if self.iou.iter().any(|v| !(0.0..=1.0).contains(v)) || self.cle.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invariant("IoU outside [0,1] or negative CLE"));
        }
        Ok(())
    }

    /// Drops the timing series so runs can be compared bit for bit.
    pub fn without_timing(&self) -> TrackingRun {
        TrackingRun {
            latency_ms: vec![0.0; self.latency_ms.len()],
            ..self.clone()
        }
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Applies the mode's perturbation to a clean search patch.
pub fn perturb(clean: &Image, geom: &crate::geometry::SearchGeometry, mode: AttackMode, sru: Option<&SruNetwork>) -> Result<Image> {
    match mode {
        AttackMode::Clean => Ok(clean.clone()),
        AttackMode::DownUp => {
            let cap = sru.map_or(MAX_LEVELS, |n| n.config().levels);
            down_up(clean, adaptive_pyramid_levels(geom)?.min(cap))
        }
        AttackMode::NoRse | AttackMode::Attack => {
            let net = sru.ok_or_else(|| Error::config(format!("mode {} needs a trained network", mode.name())))?;
            net.resample(clean, attack_levels(geom, net)?)
        }
    }
}

/// Optional side outputs of [`run_sequence_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    /// Writes `clean_NNNNNN.png` / `adv_NNNNNN.png` search patches here.
    pub dump_patches: Option<&'a Path>,
}

/// One-pass evaluation of `seq` in `mode`.
///
/// `sru` is required for the network modes; for down-up it caps the depth so
/// that down-up and the network modes always resample at the same depth.
pub fn run_sequence(tracker: &dyn SiameseTracker, seq: &Sequence, mode: AttackMode, sru: Option<&SruNetwork>) -> Result<TrackingRun> {
    run_sequence_with(tracker, seq, mode, sru, RunOptions::default())
}

pub fn run_sequence_with(
    tracker: &dyn SiameseTracker,
    seq: &Sequence,
    mode: AttackMode,
    sru: Option<&SruNetwork>,
    opts: RunOptions<'_>,
) -> Result<TrackingRun> {
    if mode.needs_network() && sru.is_none() {
        return Err(Error::config(format!("mode {} needs a trained network", mode.name())));
    }
    let gt = seq.groundtruth();
    let first = seq.frame(0)?;
    let template = init_template(tracker, &first, &gt[0])?;
    let mut run = TrackingRun {
        sequence: seq.id().to_string(),
        mode,
        boxes: vec![gt[0]],
        iou: vec![1.0],
        cle: vec![0.0],
        latency_ms: vec![0.0],
        perturbation_l2: vec![0.0],
        perturbation_abs: vec![0.0],
        aborted: None,
    };
    let mut prev = gt[0];
    for k in 1..seq.len() {
        let frame = match seq.frame(k) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{}: frame {k} unreadable, stopping: {e}", seq.id());
                run.aborted = Some(format!("frame {k}: {e}"));
                break;
            }
        };
        let (clean, geom) = crop_search_patch(&frame, &prev, tracker.search_size(), tracker.context_search())?;
        let started = Instant::now();
        let adv = perturb(&clean, &geom, mode, sru)?;
        let latency = started.elapsed().as_secs_f64() * 1e3;
        if let Some(dir) = opts.dump_patches {
            clean.save_png(&dir.join(format!("clean_{:06}.png", k + 1)))?;
            adv.save_png(&dir.join(format!("adv_{:06}.png", k + 1)))?;
        }
        let out = track_step(tracker, &template, &adv, &geom, &prev)?;
        let pred = out.predicted_box.clamped_to_frame(frame.height(), frame.width(), MIN_BOX_SIDE);
        let diff = adv.to_tensor().max_abs_diff(&clean.to_tensor());
        let n = clean.data().len() as f64;
        let l2 = if diff == 0.0 {
            0.0
        } else {
            adv.data().iter().zip(clean.data()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() / n
        };
        run.boxes.push(pred);
        run.iou.push(iou(&pred, &gt[k]));
        run.cle.push(cle(&pred, &gt[k]));
        run.latency_ms.push(latency);
        run.perturbation_l2.push(l2);
        run.perturbation_abs.push(adv.mean_abs_diff(&clean));
        prev = pred;
    }
    run.validate()?;
    Ok(run)
}

/// Evaluates every sequence in `mode`, preserving input order.
///
/// With `workers > 1` sequences run concurrently; results are identical to a
/// single-worker run apart from timings.
pub fn run_all(
    tracker: &dyn SiameseTracker,
    sequences: &[Sequence],
    mode: AttackMode,
    sru: Option<&SruNetwork>,
    workers: usize,
) -> Result<Vec<TrackingRun>> {
    if workers <= 1 {
        return sequences.iter().map(|s| run_sequence(tracker, s, mode, sru)).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| sequences.par_iter().map(|s| run_sequence(tracker, s, mode, sru)).collect())
}
