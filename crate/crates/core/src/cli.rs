//! Command-line front end: argument parsing, run manifests and the commands.
//!
//! ```text
//! ad2attack <command> [--config FILE] [--force] [--key value | --key=value]...
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 invalid input or a failed
//! check, 4 I/O or format error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_sru, load_victim, save_sru, save_victim};
use crate::config::{Config, SeedStream, SEED_ENV};
use crate::dataset::{open_all, Sequence};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, colorize, curves_csv, heatmap, high_response_fraction, perturb, render_csv, render_table, run_all,
    run_sequence_with, AttackMode, MetricReport, RunOptions, RunReport, TimingSummary, TrackingRun,
};
use crate::resample::SruNetwork;
use crate::synth::{generate_corpus, write_corpus};
use crate::training::{train, TrainingCorpus};
use crate::victim::pretrain::pretrain_victim;
use crate::victim::{crop_search_patch, init_template, ToyTracker};

pub const MANIFEST_FORMAT: &str = "ad2attack-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const USAGE: &str = "\
usage: ad2attack <command> [--config FILE] [--force] [--key value]...

commands:
  synth          write synthetic train/eval sequences to out_dir
  train-victim   pretrain the toy victim and check it against the IoU gate
  train-attack   train the resampling network against a frozen victim
  eval           evaluate the victim under each mode in eval.modes
  heatmap        saliency maps of the victim on a clean and an attacked patch
  bench          perturbation latency of the trained network
  config         print the resolved configuration

--config accepts a key = value file or a manifest.json from an earlier run.
AD2_SEED overrides the seed from the file; command-line keys override both.
";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    TrainVictim,
    TrainAttack,
    Eval,
    Heatmap,
    Bench,
    Config,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "synth" => Command::Synth,
            "train-victim" => Command::TrainVictim,
            "train-attack" => Command::TrainAttack,
            "eval" => Command::Eval,
            "heatmap" => Command::Heatmap,
            "bench" => Command::Bench,
            "config" => Command::Config,
            _ => return Err(Error::config(format!("unknown command {s:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::TrainVictim => "train-victim",
            Command::TrainAttack => "train-attack",
            Command::Eval => "eval",
            Command::Heatmap => "heatmap",
            Command::Bench => "bench",
            Command::Config => "config",
        }
    }
}

/// Parsed command line before the configuration is resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config_file: Option<PathBuf>,
    pub force: bool,
    pub overrides: Vec<(String, String)>,
}

pub fn parse_args(args: &[String]) -> Result<Invocation> {
    let (cmd, rest) = args.split_first().ok_or_else(|| Error::config("missing command"))?;
    let mut inv = Invocation {
        command: Command::parse(cmd)?,
        config_file: None,
        force: false,
        overrides: Vec::new(),
    };
    let mut it = rest.iter();
    while let Some(arg) = it.next() {
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::config(format!("unexpected argument {arg:?}")))?;
        if flag == "force" {
            inv.force = true;
            continue;
        }
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::config(format!("--{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        if key == "config" {
            inv.config_file = Some(PathBuf::from(value));
        } else {
            inv.overrides.push((key, value));
        }
    }
    Ok(inv)
}

/// Written to `out_dir/manifest.json` before any work starts and rewritten on completion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub created_unix: u64,
    pub status: String,
    /// Complete configuration snapshot; `--config manifest.json` reruns from it.
    pub config: BTreeMap<String, String>,
    /// Parameter fingerprints of loaded or produced checkpoints.
    pub fingerprints: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: Command, cfg: &Config) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            command: command.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            status: "running".into(),
            config: cfg.to_kv(),
            fingerprints: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                expected: MANIFEST_FORMAT.into(),
                found: m.format,
            });
        }
        Ok(m)
    }
}

/// Resolves the configuration of an invocation; manifests are accepted as config files.
pub fn resolve_config(inv: &Invocation, env_seed: Option<&str>) -> Result<Config> {
    match &inv.config_file {
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            let manifest = RunManifest::load(path)?;
            let mut cfg = Config::from_kv(&manifest.config)?;
            if let Some(seed) = env_seed {
                cfg.set("seed", seed)?;
            }
            for (k, v) in &inv.overrides {
                cfg.set(k, v)?;
            }
            cfg.validate()?;
            Ok(cfg)
        }
        file => Config::resolve(file.as_deref(), env_seed, &inv.overrides),
    }
}

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(Error::config(format!(
                "output directory {} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h" || a == "help") {
        print!("{USAGE}");
        return if args.is_empty() { 2 } else { 0 };
    }
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = parse_args(args).and_then(|inv| {
        let cfg = resolve_config(&inv, env_seed.as_deref())?;
        execute(inv.command, &cfg, inv.force)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command with a resolved configuration.
pub fn execute(command: Command, cfg: &Config, force: bool) -> Result<()> {
    if command == Command::Config {
        print!("{}", cfg.render());
        return Ok(());
    }
    let out = cfg.out_dir.clone();
    prepare_out_dir(&out, force)?;
    let mut manifest = RunManifest::new(command, cfg);
    manifest.save(&out)?;
    std::fs::write(out.join("config.kv"), cfg.render()).map_err(|e| Error::io(out.join("config.kv"), e))?;
    log::info!("{} -> {}", command.name(), out.display());
    let result = match command {
        Command::Synth => cmd_synth(cfg, &mut manifest),
        Command::TrainVictim => cmd_train_victim(cfg, &mut manifest),
        Command::TrainAttack => cmd_train_attack(cfg, &mut manifest),
        Command::Eval => cmd_eval(cfg, &mut manifest),
        Command::Heatmap => cmd_heatmap(cfg, &mut manifest),
        Command::Bench => cmd_bench(cfg, &mut manifest),
        Command::Config => unreachable!(),
    };
    manifest.status = match &result {
        Ok(()) => "complete".into(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.save(&out)?;
    result
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn checkpoint_metadata(cfg: &Config, command: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("command".to_string(), command.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
    ])
}

/// Training sequences from `train_dir`, or the synthetic training corpus.
pub fn train_sequences(cfg: &Config) -> Result<Vec<Sequence>> {
    match &cfg.train_dir {
        Some(dir) => non_empty(open_all(dir)?, dir),
        None => generate_corpus(&cfg.synth, cfg.sub_seed(SeedStream::SynthTrain), cfg.synth_train_sequences),
    }
}

/// Evaluation sequences from `eval_dir`, or the synthetic evaluation corpus.
pub fn eval_sequences(cfg: &Config) -> Result<Vec<Sequence>> {
    match &cfg.eval_dir {
        Some(dir) => non_empty(open_all(dir)?, dir),
        None => generate_corpus(&cfg.synth, cfg.sub_seed(SeedStream::SynthEval), cfg.synth_eval_sequences),
    }
}

fn non_empty(seqs: Vec<Sequence>, dir: &Path) -> Result<Vec<Sequence>> {
    if seqs.is_empty() {
        return Err(Error::invalid(format!("no sequences under {}", dir.display())));
    }
    Ok(seqs)
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::config(format!("{key} must be set")))
}

fn load_victim_for(cfg: &Config, manifest: &mut RunManifest) -> Result<ToyTracker> {
    let victim = load_victim(require(&cfg.victim_checkpoint, "victim.checkpoint")?)?;
    manifest.fingerprints.insert("victim".into(), victim.params().fingerprint());
    Ok(victim)
}

fn load_network(path: &Path, label: &str, manifest: &mut RunManifest) -> Result<SruNetwork> {
    let net = load_sru(path)?;
    manifest.fingerprints.insert(label.into(), net.params().fingerprint());
    Ok(net)
}

fn cmd_synth(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    for (sub, stream, count) in [
        ("train", SeedStream::SynthTrain, cfg.synth_train_sequences),
        ("eval", SeedStream::SynthEval, cfg.synth_eval_sequences),
    ] {
        let ids = write_corpus(&cfg.synth, cfg.sub_seed(stream), count, &cfg.out_dir.join(sub))?;
        println!("{sub}: {} sequences", ids.len());
        manifest.outputs.extend(ids.into_iter().map(|id| format!("{sub}/{id}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct GateRecord {
    round: usize,
    steps: usize,
    mean_iou: f64,
    precision: f64,
    success_auc: f64,
    gate: f64,
    passed: bool,
}

fn cmd_train_victim(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    let train_seqs = train_sequences(cfg)?;
    let eval_seqs = eval_sequences(cfg)?;
    let mut victim = ToyTracker::new(cfg.victim.clone(), cfg.sub_seed(SeedStream::VictimInit))?;
    let history_path = cfg.out_dir.join("victim_history.jsonl");
    let mut history = BufWriter::new(File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    let mut gates = Vec::new();
    for round in 0..cfg.victim_max_rounds.max(1) {
        let mut vt = cfg.victim_train_config();
        vt.seed ^= round as u64;
        let offset = round * vt.steps;
        for rec in pretrain_victim(&mut victim, &train_seqs, &vt)? {
            let line = serde_json::json!({ "step": offset + rec.step, "loss": rec.loss });
            writeln!(history, "{line}").map_err(|e| Error::io(&history_path, e))?;
        }
        let m = aggregate(&run_all(&victim, &eval_seqs, AttackMode::Clean, None, cfg.workers)?);
        let passed = m.mean_iou >= cfg.victim_iou_gate;
        log::info!("round {round}: clean mean IoU {:.3} (gate {:.2})", m.mean_iou, cfg.victim_iou_gate);
        println!(
            "round {round}: clean mean IoU {:.3}, precision {:.3}, success {:.3}",
            m.mean_iou, m.precision, m.success_auc
        );
        gates.push(GateRecord {
            round,
            steps: offset + vt.steps,
            mean_iou: m.mean_iou,
            precision: m.precision,
            success_auc: m.success_auc,
            gate: cfg.victim_iou_gate,
            passed,
        });
        if passed {
            break;
        }
    }
    history.flush().map_err(|e| Error::io(&history_path, e))?;
    let path = cfg.out_dir.join("victim.json");
    save_victim(&victim, &path, checkpoint_metadata(cfg, "train-victim"))?;
    manifest.fingerprints.insert("victim".into(), victim.params().fingerprint());
    manifest.outputs.extend(["victim.json", "victim_history.jsonl", "gate.json"].map(String::from));
    write_json(&cfg.out_dir.join("gate.json"), &gates)?;
    let last = gates.last().expect("at least one round");
    if !last.passed {
        return Err(Error::invariant(format!(
            "victim reached clean mean IoU {:.3}, below the {:.2} gate",
            last.mean_iou, cfg.victim_iou_gate
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    steps: usize,
    best_step: Option<usize>,
    final_total: Option<f64>,
    seconds: f64,
    victim_fingerprint: String,
}

fn cmd_train_attack(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    let victim = load_victim_for(cfg, manifest)?;
    let corpus = TrainingCorpus::from_sequences(train_sequences(cfg)?, cfg.cadence)?;
    let stream = if cfg.pyramid.rse { SeedStream::SruInit } else { SeedStream::NoRseInit };
    let net = SruNetwork::new(cfg.pyramid, cfg.sub_seed(stream))?;
    let tcfg = cfg.train_config();
    let log_path = cfg.out_dir.join("loss_history.jsonl");
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut write_err = None;
    let started = Instant::now();
    log::info!("training on {} corpus items for {} steps", corpus.len(), tcfg.steps);
    let outcome = train(&corpus, &victim, net, &tcfg, Some(&cfg.out_dir), |rec| {
        if rec.step % 50 == 0 {
            log::info!(
                "step {}: score {:.4} drift {:.4} perceptibility {:.4} total {:.4}",
                rec.step,
                rec.score,
                rec.drift,
                rec.perceptibility,
                rec.total
            );
        }
        let line = serde_json::to_string(rec).expect("loss records serialise");
        if let Err(e) = writeln!(log_file, "{line}") {
            write_err.get_or_insert(e);
        }
    });
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e));
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    let outcome = outcome?;
    let meta = checkpoint_metadata(cfg, "train-attack");
    save_sru(&outcome.network, &cfg.out_dir.join("sru.json"), meta.clone())?;
    save_sru(&outcome.best, &cfg.out_dir.join("sru_best.json"), meta.clone())?;
    for (steps, snap) in &outcome.snapshots {
        let name = format!("sru_step_{steps:06}.json");
        save_sru(snap, &cfg.out_dir.join(&name), meta.clone())?;
        manifest.outputs.push(name);
    }
    manifest.fingerprints.insert("sru".into(), outcome.network.params().fingerprint());
    manifest.fingerprints.insert("sru_best".into(), outcome.best.params().fingerprint());
    let summary = TrainSummary {
        steps: outcome.history.len(),
        best_step: outcome.best_step,
        final_total: outcome.history.last().map(|r| r.total),
        seconds: started.elapsed().as_secs_f64(),
        victim_fingerprint: outcome.victim_fingerprint,
    };
    write_json(&cfg.out_dir.join("train_summary.json"), &summary)?;
    manifest.outputs.extend(
        ["sru.json", "sru_best.json", "loss_history.jsonl", "train_summary.json"].map(String::from),
    );
    println!(
        "trained {} steps in {:.1}s; best step {:?}",
        summary.steps, summary.seconds, summary.best_step
    );
    Ok(())
}

/// Network used for each mode: the full network for the attack and for capping
/// down-up depth, the no-RSE network for its ablation.
fn network_for<'a>(mode: AttackMode, full: Option<&'a SruNetwork>, no_rse: Option<&'a SruNetwork>) -> Result<Option<&'a SruNetwork>> {
    Ok(match mode {
        AttackMode::Clean => None,
        AttackMode::DownUp => full.or(no_rse),
        AttackMode::Attack => Some(full.ok_or_else(|| Error::config("mode attack needs sru.checkpoint"))?),
        AttackMode::NoRse => Some(no_rse.ok_or_else(|| Error::config("mode no-rse needs sru.no_rse_checkpoint"))?),
    })
}

fn evaluate_mode(
    cfg: &Config,
    victim: &ToyTracker,
    seqs: &[Sequence],
    mode: AttackMode,
    net: Option<&SruNetwork>,
) -> Result<Vec<TrackingRun>> {
    if !cfg.eval_dump_patches {
        return run_all(victim, seqs, mode, net, cfg.workers);
    }
    seqs.iter()
        .map(|s| {
            let dir = cfg.out_dir.join("patches").join(mode.name()).join(s.id());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            run_sequence_with(victim, s, mode, net, RunOptions { dump_patches: Some(&dir) })
        })
        .collect()
}

fn cmd_eval(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    let victim = load_victim_for(cfg, manifest)?;
    let full = cfg
        .sru_checkpoint
        .as_deref()
        .map(|p| load_network(p, "sru", manifest))
        .transpose()?;
    let no_rse = cfg
        .no_rse_checkpoint
        .as_deref()
        .map(|p| load_network(p, "sru_no_rse", manifest))
        .transpose()?;
    // Check every mode's requirements before spending time on any of them.
    let mut modes = vec![AttackMode::Clean];
    modes.extend(cfg.eval_modes.iter().copied().filter(|m| *m != AttackMode::Clean));
    for &mode in &modes {
        network_for(mode, full.as_ref(), no_rse.as_ref())?;
    }
    let seqs = eval_sequences(cfg)?;
    let meta = BTreeMap::from([("seed".to_string(), cfg.seed.to_string())]);
    let mut reports: Vec<(AttackMode, MetricReport)> = Vec::new();
    for &mode in &modes {
        let started = Instant::now();
        let runs = evaluate_mode(cfg, &victim, &seqs, mode, network_for(mode, full.as_ref(), no_rse.as_ref())?)?;
        for run in &runs {
            RunReport::new(run.clone(), meta.clone())
                .save(&ensure_dir(&cfg.out_dir.join("runs").join(mode.name()))?.join(format!("{}.json", run.sequence)))?;
        }
        let m = aggregate(&runs);
        log::info!(
            "{}: precision {:.3} success {:.3} in {:.1}s",
            mode.name(),
            m.precision,
            m.success_auc,
            started.elapsed().as_secs_f64()
        );
        write_json(&cfg.out_dir.join(format!("metrics_{}.json", mode.name())), &m)?;
        let (p, s) = curves_csv(&m);
        write_text(&cfg.out_dir.join(format!("precision_{}.csv", mode.name())), &p)?;
        write_text(&cfg.out_dir.join(format!("success_{}.csv", mode.name())), &s)?;
        reports.push((mode, m));
    }
    let clean = reports[0].1.clone();
    let rows: Vec<(AttackMode, MetricReport)> = reports
        .into_iter()
        .filter(|(m, _)| *m != AttackMode::Clean || cfg.eval_modes.contains(&AttackMode::Clean))
        .collect();
    let table = render_table(&clean, &rows);
    write_text(&cfg.out_dir.join("table.txt"), &table)?;
    write_text(&cfg.out_dir.join("table.csv"), &render_csv(&clean, &rows))?;
    manifest.outputs.extend(["table.txt", "table.csv", "runs/"].map(String::from));
    print!("{table}");
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[derive(Serialize)]
struct HeatmapSummary {
    sequence: String,
    frame: usize,
    threshold: f64,
    clean_high_response: f64,
    attacked_high_response: f64,
}

fn cmd_heatmap(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    let victim = load_victim_for(cfg, manifest)?;
    let net = load_network(require(&cfg.sru_checkpoint, "sru.checkpoint")?, "sru", manifest)?;
    let seqs = eval_sequences(cfg)?;
    let seq = seqs
        .get(cfg.heatmap_sequence)
        .ok_or_else(|| Error::config(format!("heatmap.sequence {} out of range ({} sequences)", cfg.heatmap_sequence, seqs.len())))?;
    let k = cfg.heatmap_frame;
    if k == 0 || k >= seq.len() {
        return Err(Error::config(format!("heatmap.frame must lie in 1..{}", seq.len())));
    }
    let gt = seq.groundtruth();
    let template = init_template(&victim, &seq.frame(0)?, &gt[0])?;
    let (clean, geom) = crop_search_patch(&seq.frame(k)?, &gt[k - 1], victim.config().search_size, victim.config().context_search)?;
    let adv = perturb(&clean, &geom, AttackMode::Attack, Some(&net))?;
    let clean_map = heatmap(&victim, &template, &clean)?;
    let adv_map = heatmap(&victim, &template, &adv)?;
    let out = &cfg.out_dir;
    clean.save_png(&out.join("clean_patch.png"))?;
    adv.save_png(&out.join("attacked_patch.png"))?;
    for (name, map) in [("heatmap_clean.png", &clean_map), ("heatmap_attacked.png", &adv_map)] {
        let path = out.join(name);
        colorize(map).save(&path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
    }
    let summary = HeatmapSummary {
        sequence: seq.id().to_string(),
        frame: k,
        threshold: cfg.heatmap_threshold,
        clean_high_response: high_response_fraction(&clean_map, cfg.heatmap_threshold),
        attacked_high_response: high_response_fraction(&adv_map, cfg.heatmap_threshold),
    };
    write_json(&out.join("heatmap.json"), &summary)?;
    manifest.outputs.extend(
        ["clean_patch.png", "attacked_patch.png", "heatmap_clean.png", "heatmap_attacked.png", "heatmap.json"].map(String::from),
    );
    println!(
        "high-response fraction: clean {:.3}, attacked {:.3}",
        summary.clean_high_response, summary.attacked_high_response
    );
    Ok(())
}

fn cmd_bench(cfg: &Config, manifest: &mut RunManifest) -> Result<()> {
    let victim = load_victim_for(cfg, manifest)?;
    let net = load_network(require(&cfg.sru_checkpoint, "sru.checkpoint")?, "sru", manifest)?;
    let seqs = eval_sequences(cfg)?;
    // Single worker so timings are not distorted by contention.
    let runs = run_all(&victim, &seqs, AttackMode::Attack, Some(&net), 1)?;
    let timing = TimingSummary::from_runs(&runs);
    write_json(&cfg.out_dir.join("timing.json"), &timing)?;
    manifest.outputs.push("timing.json".into());
    println!(
        "{} frames: mean {:.2} ms, p50 {:.2} ms, p95 {:.2} ms, max {:.2} ms ({:.1} fps)",
        timing.frames, timing.mean_ms, timing.p50_ms, timing.p95_ms, timing.max_ms, timing.fps
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_flags_and_overrides() {
        let inv = parse_args(&args("eval --config a.kv --force --seed 3 --attack.gamma=5")).unwrap();
        assert_eq!(inv.command, Command::Eval);
        assert_eq!(inv.config_file, Some(PathBuf::from("a.kv")));
        assert!(inv.force);
        assert_eq!(
            inv.overrides,
            vec![("seed".into(), "3".into()), ("attack.gamma".into(), "5".into())]
        );
    }

    #[test]
    fn bad_command_lines_are_config_errors() {
        for bad in ["frobnicate", "eval stray", "eval --seed"] {
            let err = parse_args(&args(bad)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn refuses_non_empty_output_without_force() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("x"), "").unwrap();
        assert!(prepare_out_dir(tmp.path(), false).is_err());
        assert!(prepare_out_dir(tmp.path(), true).is_ok());
        assert!(prepare_out_dir(&tmp.path().join("fresh"), false).is_ok());
    }

    #[test]
    fn manifest_reproduces_config() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.set("attack.tau_c", "7.5").unwrap();
        RunManifest::new(Command::Eval, &cfg).save(tmp.path()).unwrap();
        let inv = Invocation {
            command: Command::Eval,
            config_file: Some(tmp.path().join(MANIFEST_FILE)),
            force: false,
            overrides: vec![],
        };
        assert_eq!(resolve_config(&inv, None).unwrap(), cfg);
    }

    #[test]
    fn missing_networks_are_reported_before_running() {
        assert!(network_for(AttackMode::Attack, None, None).is_err());
        assert!(network_for(AttackMode::NoRse, None, None).is_err());
        assert!(network_for(AttackMode::DownUp, None, None).unwrap().is_none());
    }
}
