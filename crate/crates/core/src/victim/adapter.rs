//! The contract any tracker must meet to be attacked and evaluated.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::crop::crop_search_patch;
use super::decode::decode_box;
use super::maps::{RegressionMap, ScoreMap, TrackerOutput};
use crate::error::{Error, Result};
use crate::geometry::{BBox, SearchGeometry};
use crate::image::Image;
use crate::tensor::Tensor;

/// A Siamese tracker seen through its two heads.
///
/// `respond` must return target-vs-background logits shaped `2×G×G`
/// (background first) and regression values shaped `4×G×G` ordered
/// `(x, y, w, h)`: centre offsets in response cells and log size ratios.
pub trait SiameseTracker: Send + Sync {
    fn search_size(&self) -> usize;
    fn template_size(&self) -> usize;
    fn context_search(&self) -> f64;
    fn context_template(&self) -> f64;
    /// Search-patch pixels per response cell.
    fn response_stride(&self) -> f64;
    fn embed_template(&self, patch: &Image) -> Result<Tensor>;
    fn respond(&self, template: &Tensor, search: &Image) -> Result<(Tensor, Tensor)>;
}

/// Cached template features for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub features: Tensor,
}

pub fn init_template(tracker: &dyn SiameseTracker, frame: &Image, init_box: &BBox) -> Result<Template> {
    let (patch, _) = crop_search_patch(frame, init_box, tracker.template_size(), tracker.context_template())?;
    Ok(Template {
        features: tracker.embed_template(&patch)?,
    })
}

/// Raw head outputs as validated maps.
pub fn respond(tracker: &dyn SiameseTracker, template: &Template, search: &Image) -> Result<(ScoreMap, RegressionMap)> {
    let (s, r) = tracker.respond(&template.features, search)?;
    let score = ScoreMap::new(s)?;
    let regression = RegressionMap::new(r)?;
    if score.grid() != regression.grid() {
        return Err(Error::invalid("score and regression grids disagree"));
    }
    Ok((score, regression))
}

/// Runs both heads on a search patch and decodes the box.
pub fn track_step(
    tracker: &dyn SiameseTracker,
    template: &Template,
    search: &Image,
    geom: &SearchGeometry,
    prev_box: &BBox,
) -> Result<TrackerOutput> {
    let (score, regression) = respond(tracker, template, search)?;
    let predicted_box = decode_box(&score, &regression, geom, prev_box, tracker.response_stride())?;
    Ok(TrackerOutput {
        score,
        regression,
        predicted_box,
    })
}

/// Trackers available to the harness, by name.
#[derive(Clone, Default)]
pub struct TrackerRegistry {
    entries: BTreeMap<String, Arc<dyn SiameseTracker>>,
}

impl TrackerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Probes the tracker once on blank patches and rejects it unless the
    /// heads have the required channel layout.
    pub fn register(&mut self, name: &str, tracker: Arc<dyn SiameseTracker>) -> Result<()> {
        if name.is_empty() {
            return Err(Error::Registration("empty tracker name".into()));
        }
        if self.entries.contains_key(name) {
            return Err(Error::Registration(format!("`{name}` is already registered")));
        }
        let (ts, ss) = (tracker.template_size(), tracker.search_size());
        if ts == 0 || ss == 0 || !(tracker.response_stride() > 0.0) {
            return Err(Error::Registration(format!("`{name}` reports degenerate patch geometry")));
        }
        let probe = || -> Result<()> {
            let z = tracker.embed_template(&Image::filled(ts, ts, [0.5; 3]))?;
            let (s, r) = tracker.respond(&z, &Image::filled(ss, ss, [0.5; 3]))?;
            let score = ScoreMap::new(s)?;
            let reg = RegressionMap::new(r)?;
            if score.grid() != reg.grid() {
                return Err(Error::invalid("score and regression grids disagree"));
            }
            Ok(())
        };
        probe().map_err(|e| Error::Registration(format!("`{name}` failed the head probe: {e}")))?;
        self.entries.insert(name.to_string(), tracker);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SiameseTracker>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Registration(format!("no tracker registered as `{name}`")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
