use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, MetricReport};
use super::TrackingRun;
use crate::error::{Error, Result};

pub const RUN_FORMAT: &str = "ad2attack-run/1";

/// Everything recorded about one evaluated sequence in one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub metadata: BTreeMap<String, String>,
    pub run: TrackingRun,
    pub metrics: MetricReport,
}

impl RunReport {
    pub fn new(run: TrackingRun, metadata: BTreeMap<String, String>) -> Self {
        let metrics = aggregate(std::slice::from_ref(&run));
        Self {
            format: RUN_FORMAT.into(),
            metadata,
            run,
            metrics,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: RunReport = serde_json::from_str(&text)?;
        if report.format != RUN_FORMAT {
            return Err(Error::Format {
                expected: RUN_FORMAT.into(),
                found: report.format,
            });
        }
        Ok(report)
    }
}

/// Latency distribution of the perturbation step over attacked frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub frames: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub fps: f64,
}

impl TimingSummary {
    pub fn from_runs(runs: &[TrackingRun]) -> Self {
        let mut lat: Vec<f64> = runs.iter().flat_map(|r| r.latency_ms.iter().skip(1).copied()).collect();
        lat.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if lat.is_empty() {
                0.0
            } else {
                lat[((lat.len() - 1) as f64 * q).round() as usize]
            }
        };
        let mean = super::mean(&lat);
        Self {
            frames: lat.len(),
            mean_ms: mean,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            max_ms: lat.last().copied().unwrap_or(0.0),
            fps: if mean > 0.0 { 1e3 / mean } else { 0.0 },
        }
    }
}

/// `(precision curve CSV, success curve CSV)` as threshold,value point lists.
pub fn curves_csv(m: &MetricReport) -> (String, String) {
    let mut p = String::from("cle_threshold_px,precision\n");
    for (t, v) in &m.precision_curve {
        let _ = writeln!(p, "{t},{v}");
    }
    let mut s = String::from("iou_threshold,success\n");
    for (t, v) in &m.success_curve {
        let _ = writeln!(s, "{t},{v}");
    }
    (p, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::AttackMode;
    use crate::geometry::BBox;

    fn run() -> TrackingRun {
        TrackingRun {
            sequence: "s".into(),
            mode: AttackMode::Attack,
            boxes: vec![BBox::new(5.0, 5.0, 2.0, 3.0).unwrap(); 3],
            iou: vec![1.0, 0.5, 0.25],
            cle: vec![0.0, 1.5, 30.0],
            latency_ms: vec![0.0, 2.0, 4.0],
            perturbation_l2: vec![0.0, 1e-3, 2e-3],
            perturbation_abs: vec![0.0, 0.01, 0.02],
            aborted: None,
        }
    }

    #[test]
    fn report_round_trips_exactly() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("r.json");
        let r = RunReport::new(run(), BTreeMap::from([("seed".into(), "3".into())]));
        r.save(&path).unwrap();
        assert_eq!(RunReport::load(&path).unwrap(), r);
    }

    #[test]
    fn foreign_format_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("r.json");
        let mut r = RunReport::new(run(), BTreeMap::new());
        r.format = "other/9".into();
        r.save(&path).unwrap();
        assert!(matches!(RunReport::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn timing_skips_the_initial_frame() {
        let t = TimingSummary::from_runs(&[run()]);
        assert_eq!(t.frames, 2);
        assert_eq!(t.mean_ms, 3.0);
        assert!((t.fps - 1e3 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn curves_have_headers_and_points() {
        let (p, s) = curves_csv(&RunReport::new(run(), BTreeMap::new()).metrics);
        assert_eq!(p.lines().count(), 52);
        assert_eq!(s.lines().count(), 22);
    }
}
