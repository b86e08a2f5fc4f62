use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{mean, AttackMode, TrackingRun};

pub const PRECISION_THRESHOLD_PX: f64 = 20.0;

/// IoU thresholds `0, 0.05, …, 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn precision_thresholds() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

/// Aggregate metrics over every frame of a set of runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: usize,
    /// Fraction of frames with CLE ≤ 20 px.
    pub precision: f64,
    /// Mean over IoU thresholds of the fraction of frames with IoU strictly above it.
    pub success_auc: f64,
    pub mean_iou: f64,
    /// `(CLE threshold, fraction with CLE ≤ threshold)`.
    pub precision_curve: Vec<(f64, f64)>,
    /// `(IoU threshold, fraction with IoU > threshold)`.
    pub success_curve: Vec<(f64, f64)>,
    pub mean_perturbation_l2: f64,
    pub mean_perturbation_abs: f64,
}

fn fraction(values: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| keep(**v)).count() as f64 / values.len() as f64
}

pub fn aggregate(runs: &[TrackingRun]) -> MetricReport {
    let ious: Vec<f64> = runs.iter().flat_map(|r| r.iou.iter().copied()).collect();
    let cles: Vec<f64> = runs.iter().flat_map(|r| r.cle.iter().copied()).collect();
    // Perturbation statistics skip the unperturbed initial frames.
    let l2: Vec<f64> = runs.iter().flat_map(|r| r.perturbation_l2.iter().skip(1).copied()).collect();
    let abs: Vec<f64> = runs.iter().flat_map(|r| r.perturbation_abs.iter().skip(1).copied()).collect();
    let precision_curve: Vec<(f64, f64)> = precision_thresholds()
        .into_iter()
        .map(|t| (t, fraction(&cles, |c| c <= t)))
        .collect();
    let success_curve: Vec<(f64, f64)> = success_thresholds()
        .into_iter()
        .map(|t| (t, fraction(&ious, |v| v > t)))
        .collect();
    let success_auc = if ious.is_empty() {
        0.0
    } else {
        success_curve.iter().map(|(_, f)| f).sum::<f64>() / success_curve.len() as f64
    };
    MetricReport {
        frames: ious.len(),
        precision: fraction(&cles, |c| c <= PRECISION_THRESHOLD_PX),
        success_auc,
        mean_iou: mean(&ious),
        precision_curve,
        success_curve,
        mean_perturbation_l2: mean(&l2),
        mean_perturbation_abs: mean(&abs),
    }
}

/// Relative change in percent, `(att − org) / org · 100`.
pub fn delta_percent(org: f64, att: f64) -> f64 {
    if org == 0.0 {
        if att == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(att)
        }
    } else {
        (att - org) / org * 100.0
    }
}

/// Plain-text comparison table: one row per mode against the clean baseline.
pub fn render_table(clean: &MetricReport, rows: &[(AttackMode, MetricReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} | {:>7} {:>7} {:>8} | {:>7} {:>7} {:>8}",
        "mode", "P.Org", "P.Att", "P.Δ%", "S.Org", "S.Att", "S.Δ%"
    );
    let _ = writeln!(out, "{}", "-".repeat(70));
    for (mode, m) in rows {
        let _ = writeln!(
            out,
            "{:<8} | {:>7.3} {:>7.3} {:>8.2} | {:>7.3} {:>7.3} {:>8.2}",
            mode.name(),
            clean.precision,
            m.precision,
            delta_percent(clean.precision, m.precision),
            clean.success_auc,
            m.success_auc,
            delta_percent(clean.success_auc, m.success_auc),
        );
    }
    out
}

/// The same table as comma-separated values with full precision.
pub fn render_csv(clean: &MetricReport, rows: &[(AttackMode, MetricReport)]) -> String {
    let mut out = String::from("mode,precision_org,precision_att,precision_delta_pct,success_org,success_att,success_delta_pct,mean_perturbation_abs\n");
    for (mode, m) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            mode.name(),
            clean.precision,
            m.precision,
            delta_percent(clean.precision, m.precision),
            clean.success_auc,
            m.success_auc,
            delta_percent(clean.success_auc, m.success_auc),
            m.mean_perturbation_abs,
        );
    }
    out
}
