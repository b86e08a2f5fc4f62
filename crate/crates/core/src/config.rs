//! Flat `key = value` run configuration.
//!
//! Every field is addressable by a dotted key. Files hold one `key = value`
//! per line (`#` starts a comment); command-line overrides use the same keys.
//! Unknown keys are always an error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::AttackMode;
use crate::losses::{AttackConfig, BackgroundSign, MaskRule};
use crate::resample::PyramidConfig;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;
use crate::victim::pretrain::VictimTrainConfig;
use crate::victim::VictimConfig;

/// Environment variable that overrides `seed`.
pub const SEED_ENV: &str = "AD2_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Root of training sequence directories; synthetic data when unset.
    pub train_dir: Option<PathBuf>,
    /// Root of evaluation sequence directories; synthetic data when unset.
    pub eval_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub synth_train_sequences: usize,
    pub synth_eval_sequences: usize,
    pub victim: VictimConfig,
    pub victim_train: VictimTrainConfig,
    /// Pretraining rounds of `victim_train.steps` each before giving up on the gate.
    pub victim_max_rounds: usize,
    pub victim_iou_gate: f64,
    pub victim_checkpoint: Option<PathBuf>,
    pub pyramid: PyramidConfig,
    pub train: TrainConfig,
    pub cadence: usize,
    pub sru_checkpoint: Option<PathBuf>,
    pub no_rse_checkpoint: Option<PathBuf>,
    pub eval_modes: Vec<AttackMode>,
    pub eval_dump_patches: bool,
    pub heatmap_sequence: usize,
    pub heatmap_frame: usize,
    pub heatmap_threshold: f64,
}

/// Score-reversal weight of the bundled run. With the library default of 1
/// the shrink term dominates and boxes collapse in place without drifting.
pub const DESK_PHI: f64 = 10.0;

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            out_dir: PathBuf::from("runs/out"),
            train_dir: None,
            eval_dir: None,
            synth: SynthConfig::default(),
            synth_train_sequences: 16,
            synth_eval_sequences: 8,
            victim: VictimConfig::default(),
            victim_train: VictimTrainConfig::default(),
            victim_max_rounds: 3,
            victim_iou_gate: 0.6,
            victim_checkpoint: None,
            pyramid: PyramidConfig {
                levels: 3,
                convs_per_block: 2,
                feature_channels: 16,
                group_count: 4,
                attention_kernel: 7,
                rse: true,
            },
            train: TrainConfig {
                attack: AttackConfig {
                    phi: DESK_PHI,
                    ..AttackConfig::default()
                },
                ..TrainConfig::default()
            },
            cadence: 10,
            sru_checkpoint: None,
            no_rse_checkpoint: None,
            eval_modes: AttackMode::ALL.to_vec(),
            eval_dump_patches: false,
            heatmap_sequence: 0,
            heatmap_frame: 1,
            heatmap_threshold: 0.5,
        }
    }
}

/// Stream tags for [`Config::sub_seed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedStream {
    SynthTrain = 1,
    SynthEval = 2,
    VictimInit = 3,
    VictimTrain = 4,
    SruInit = 5,
    AttackTrain = 6,
    NoRseInit = 7,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn sign_name(s: BackgroundSign) -> &'static str {
    match s {
        BackgroundSign::PaperLiteral => "literal",
        BackgroundSign::IntentCorrected => "corrected",
    }
}

fn rule_name(r: MaskRule) -> &'static str {
    match r {
        MaskRule::PaperLiteral => "literal",
        MaskRule::IntentCorrected => "corrected",
    }
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v.trim()),
            "train_dir" => self.train_dir = parse_path(v),
            "eval_dir" => self.eval_dir = parse_path(v),
            "synth.width" => self.synth.frame_width = parse(key, v)?,
            "synth.height" => self.synth.frame_height = parse(key, v)?,
            "synth.frames" => self.synth.frames = parse(key, v)?,
            "synth.min_target" => self.synth.min_target = parse(key, v)?,
            "synth.max_target" => self.synth.max_target = parse(key, v)?,
            "synth.max_speed" => self.synth.max_speed = parse(key, v)?,
            "synth.train_sequences" => self.synth_train_sequences = parse(key, v)?,
            "synth.eval_sequences" => self.synth_eval_sequences = parse(key, v)?,
            "victim.search_size" => self.victim.search_size = parse(key, v)?,
            "victim.template_size" => self.victim.template_size = parse(key, v)?,
            "victim.context_search" => self.victim.context_search = parse(key, v)?,
            "victim.context_template" => self.victim.context_template = parse(key, v)?,
            "victim.channels" => self.victim.channels = parse_list(key, v)?,
            "victim.strides" => self.victim.strides = parse_list(key, v)?,
            "victim.head_channels" => self.victim.head_channels = parse(key, v)?,
            "victim.checkpoint" => self.victim_checkpoint = parse_path(v),
            "victim_train.steps" => self.victim_train.steps = parse(key, v)?,
            "victim_train.batch_size" => self.victim_train.batch_size = parse(key, v)?,
            "victim_train.lr" => self.victim_train.lr = parse(key, v)?,
            "victim_train.shift" => self.victim_train.shift = parse(key, v)?,
            "victim_train.scale_jitter" => self.victim_train.scale_jitter = parse(key, v)?,
            "victim_train.pos_radius" => self.victim_train.pos_radius = parse(key, v)?,
            "victim_train.neg_radius" => self.victim_train.neg_radius = parse(key, v)?,
            "victim_train.reg_weight" => self.victim_train.reg_weight = parse(key, v)?,
            "victim_train.blur_prob" => self.victim_train.blur_prob = parse(key, v)?,
            "victim_train.blur_max_factor" => self.victim_train.blur_max_factor = parse(key, v)?,
            "victim_train.max_rounds" => self.victim_max_rounds = parse(key, v)?,
            "victim_train.iou_gate" => self.victim_iou_gate = parse(key, v)?,
            "pyramid.levels" => self.pyramid.levels = parse(key, v)?,
            "pyramid.convs_per_block" => self.pyramid.convs_per_block = parse(key, v)?,
            "pyramid.feature_channels" => self.pyramid.feature_channels = parse(key, v)?,
            "pyramid.group_count" => self.pyramid.group_count = parse(key, v)?,
            "pyramid.attention_kernel" => self.pyramid.attention_kernel = parse(key, v)?,
            "pyramid.rse" => self.pyramid.rse = parse_bool(key, v)?,
            "train.steps" => self.train.steps = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.cadence" => self.cadence = parse(key, v)?,
            "train.snapshot_every" => self.train.snapshot_every = parse(key, v)?,
            "attack.epsilon" => self.train.attack.epsilon = parse(key, v)?,
            "attack.phi" => self.train.attack.phi = parse(key, v)?,
            "attack.alpha" => self.train.attack.alpha = parse(key, v)?,
            "attack.beta" => self.train.attack.beta = parse(key, v)?,
            "attack.gamma" => self.train.attack.gamma = parse(key, v)?,
            "attack.tau_b" => self.train.attack.tau_b = parse(key, v)?,
            "attack.tau_c" => self.train.attack.tau_c = parse(key, v)?,
            "attack.background_sign" => {
                self.train.attack.background_sign = match v.trim() {
                    "literal" => BackgroundSign::PaperLiteral,
                    "corrected" => BackgroundSign::IntentCorrected,
                    _ => return Err(Error::config(format!("{key}: expected literal or corrected, got {v:?}"))),
                }
            }
            "attack.mask_rule" => {
                self.train.attack.mask_rule = match v.trim() {
                    "literal" => MaskRule::PaperLiteral,
                    "corrected" => MaskRule::IntentCorrected,
                    _ => return Err(Error::config(format!("{key}: expected literal or corrected, got {v:?}"))),
                }
            }
            "sru.checkpoint" => self.sru_checkpoint = parse_path(v),
            "sru.no_rse_checkpoint" => self.no_rse_checkpoint = parse_path(v),
            "eval.modes" => {
                self.eval_modes = v
                    .split(',')
                    .map(|m| AttackMode::parse(m.trim()))
                    .collect::<Result<_>>()?
            }
            "eval.dump_patches" => self.eval_dump_patches = parse_bool(key, v)?,
            "heatmap.sequence" => self.heatmap_sequence = parse(key, v)?,
            "heatmap.frame" => self.heatmap_frame = parse(key, v)?,
            "heatmap.threshold" => self.heatmap_threshold = parse(key, v)?,
            _ => return Err(Error::config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value; feeding these back through [`Config::set`] reproduces `self`.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let a = &self.train.attack;
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("train_dir", show_path(&self.train_dir)),
            ("eval_dir", show_path(&self.eval_dir)),
            ("synth.width", self.synth.frame_width.to_string()),
            ("synth.height", self.synth.frame_height.to_string()),
            ("synth.frames", self.synth.frames.to_string()),
            ("synth.min_target", self.synth.min_target.to_string()),
            ("synth.max_target", self.synth.max_target.to_string()),
            ("synth.max_speed", self.synth.max_speed.to_string()),
            ("synth.train_sequences", self.synth_train_sequences.to_string()),
            ("synth.eval_sequences", self.synth_eval_sequences.to_string()),
            ("victim.search_size", self.victim.search_size.to_string()),
            ("victim.template_size", self.victim.template_size.to_string()),
            ("victim.context_search", self.victim.context_search.to_string()),
            ("victim.context_template", self.victim.context_template.to_string()),
            ("victim.channels", join(&self.victim.channels)),
            ("victim.strides", join(&self.victim.strides)),
            ("victim.head_channels", self.victim.head_channels.to_string()),
            ("victim.checkpoint", show_path(&self.victim_checkpoint)),
            ("victim_train.steps", self.victim_train.steps.to_string()),
            ("victim_train.batch_size", self.victim_train.batch_size.to_string()),
            ("victim_train.lr", self.victim_train.lr.to_string()),
            ("victim_train.shift", self.victim_train.shift.to_string()),
            ("victim_train.scale_jitter", self.victim_train.scale_jitter.to_string()),
            ("victim_train.pos_radius", self.victim_train.pos_radius.to_string()),
            ("victim_train.neg_radius", self.victim_train.neg_radius.to_string()),
            ("victim_train.reg_weight", self.victim_train.reg_weight.to_string()),
            ("victim_train.blur_prob", self.victim_train.blur_prob.to_string()),
            ("victim_train.blur_max_factor", self.victim_train.blur_max_factor.to_string()),
            ("victim_train.max_rounds", self.victim_max_rounds.to_string()),
            ("victim_train.iou_gate", self.victim_iou_gate.to_string()),
            ("pyramid.levels", self.pyramid.levels.to_string()),
            ("pyramid.convs_per_block", self.pyramid.convs_per_block.to_string()),
            ("pyramid.feature_channels", self.pyramid.feature_channels.to_string()),
            ("pyramid.group_count", self.pyramid.group_count.to_string()),
            ("pyramid.attention_kernel", self.pyramid.attention_kernel.to_string()),
            ("pyramid.rse", self.pyramid.rse.to_string()),
            ("train.steps", self.train.steps.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.cadence", self.cadence.to_string()),
            ("train.snapshot_every", self.train.snapshot_every.to_string()),
            ("attack.epsilon", a.epsilon.to_string()),
            ("attack.phi", a.phi.to_string()),
            ("attack.alpha", a.alpha.to_string()),
            ("attack.beta", a.beta.to_string()),
            ("attack.gamma", a.gamma.to_string()),
            ("attack.tau_b", a.tau_b.to_string()),
            ("attack.tau_c", a.tau_c.to_string()),
            ("attack.background_sign", sign_name(a.background_sign).to_string()),
            ("attack.mask_rule", rule_name(a.mask_rule).to_string()),
            ("sru.checkpoint", show_path(&self.sru_checkpoint)),
            ("sru.no_rse_checkpoint", show_path(&self.no_rse_checkpoint)),
            ("eval.modes", self.eval_modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
            ("eval.dump_patches", self.eval_dump_patches.to_string()),
            ("heatmap.sequence", self.heatmap_sequence.to_string()),
            ("heatmap.frame", self.heatmap_frame.to_string()),
            ("heatmap.threshold", self.heatmap_threshold.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Config::default();
        for (k, v) in kv {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        self.to_kv().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Defaults, then `file`, then `AD2_SEED`, then `overrides` (highest precedence).
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        if let Some(seed) = env_seed {
            cfg.set("seed", seed)
                .map_err(|_| Error::config(format!("{SEED_ENV}: cannot parse {seed:?}")))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.cadence == 0 {
            return Err(Error::config("train.cadence must be positive"));
        }
        if !(0.0..=1.0).contains(&self.victim_iou_gate) {
            return Err(Error::config("victim_train.iou_gate must lie in [0,1]"));
        }
        if self.eval_modes.is_empty() {
            return Err(Error::config("eval.modes must name at least one mode"));
        }
        self.synth.validate()?;
        self.victim.validate()?;
        self.victim_train.validate()?;
        self.pyramid.validate()?;
        self.train.validate()
    }

    /// Independent seed for one consumer of randomness.
    pub fn sub_seed(&self, stream: SeedStream) -> u64 {
        self.seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Attack-training settings with the derived training seed and worker count.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.sub_seed(SeedStream::AttackTrain),
            workers: self.workers,
            ..self.train
        }
    }

    pub fn victim_train_config(&self) -> VictimTrainConfig {
        VictimTrainConfig {
            seed: self.sub_seed(SeedStream::VictimTrain),
            ..self.victim_train
        }
    }

    pub fn attack(&self) -> &AttackConfig {
        &self.train.attack
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = Config::default();
        cfg.set("attack.gamma", "1e6").unwrap();
        cfg.set("victim.channels", "8,8,8,8,8").unwrap();
        cfg.set("eval.modes", "clean,attack").unwrap();
        cfg.set("sru.checkpoint", "a/b.json").unwrap();
        assert_eq!(Config::from_kv(&cfg.to_kv()).unwrap(), cfg);
        let mut again = Config::default();
        again.apply_text(&cfg.render()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = Config::default();
        assert!(matches!(cfg.set("attack.gama", "1"), Err(Error::Config(_))));
        assert!(cfg.apply_text("seed = 1\nbogus = 2\n").is_err());
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn precedence_is_cli_over_env_over_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.kv");
        std::fs::write(&path, "seed = 5  # file\nworkers = 2\n").unwrap();
        let cfg = Config::resolve(Some(&path), None, &[]).unwrap();
        assert_eq!((cfg.seed, cfg.workers), (5, 2));
        let cfg = Config::resolve(Some(&path), Some("9"), &[]).unwrap();
        assert_eq!(cfg.seed, 9);
        let cfg = Config::resolve(Some(&path), Some("9"), &[("seed".into(), "11".into())]).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(Config::resolve(None, None, &[("attack.epsilon".into(), "1.5".into())]).is_err());
        assert!(Config::resolve(None, None, &[("pyramid.levels".into(), "0".into())]).is_err());
        assert!(Config::resolve(None, Some("x"), &[]).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        let cfg = Config::default();
        assert_ne!(cfg.sub_seed(SeedStream::SynthTrain), cfg.sub_seed(SeedStream::SynthEval));
    }
}
