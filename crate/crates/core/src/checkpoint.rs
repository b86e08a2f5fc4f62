//! JSON checkpoints for the resampling network and the toy victim.
//!
//! A checkpoint stores the architecture config, every parameter tensor and a
//! SHA-256 fingerprint of the parameters, which is re-checked on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::resample::{PyramidConfig, SruNetwork};
use crate::victim::{ToyTracker, VictimConfig};

pub const SRU_FORMAT: &str = "ad2attack-sru/1";
pub const VICTIM_FORMAT: &str = "ad2attack-victim/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<C> {
    pub format: String,
    pub config: C,
    pub fingerprint: String,
    pub metadata: BTreeMap<String, String>,
    pub params: ParamStore,
}

impl<C: Serialize + DeserializeOwned> Checkpoint<C> {
    fn new(format: &str, config: C, params: &ParamStore, metadata: BTreeMap<String, String>) -> Self {
        Self {
            format: format.into(),
            config,
            fingerprint: params.fingerprint(),
            metadata,
            params: params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, format: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if found != format {
            return Err(Error::Format {
                expected: format.into(),
                found: found.into(),
            });
        }
        let ckpt: Self = serde_json::from_value(value)?;
        let actual = ckpt.params.fingerprint();
        if actual != ckpt.fingerprint {
            return Err(Error::invariant(format!(
                "{}: parameter fingerprint {actual} does not match recorded {}",
                path.display(),
                ckpt.fingerprint
            )));
        }
        Ok(ckpt)
    }
}

pub fn save_sru(net: &SruNetwork, path: &Path, metadata: BTreeMap<String, String>) -> Result<()> {
    Checkpoint::new(SRU_FORMAT, *net.config(), net.params(), metadata).save(path)
}

pub fn load_sru(path: &Path) -> Result<SruNetwork> {
    let ckpt = Checkpoint::<PyramidConfig>::load(path, SRU_FORMAT)?;
    let mut net = SruNetwork::new(ckpt.config, 0)?;
    net.load_params(ckpt.params)?;
    Ok(net)
}

pub fn save_victim(tracker: &ToyTracker, path: &Path, metadata: BTreeMap<String, String>) -> Result<()> {
    Checkpoint::new(VICTIM_FORMAT, tracker.config().clone(), tracker.params(), metadata).save(path)
}

pub fn load_victim(path: &Path) -> Result<ToyTracker> {
    let ckpt = Checkpoint::<VictimConfig>::load(path, VICTIM_FORMAT)?;
    let mut tracker = ToyTracker::new(ckpt.config, 0)?;
    tracker.load_params(ckpt.params)?;
    Ok(tracker)
}
