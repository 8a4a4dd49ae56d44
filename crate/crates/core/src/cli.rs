//! The `csi-mae` experiment driver. Every subcommand reads a [`RunConfig`]
//! and writes its artifacts under `run.out`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::channelgen::{generate_dataset, load_dataset, sample_seed, CsiSample};
use crate::config::{label_seed, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{delta_percent, write_report, MetricsReport};
use crate::model::{patchify_all, pretrain, Checkpoint, CsiMae, ModelConfig};
use crate::tasks::{train_task, zero_shot_eval, TaskKind, TaskModel};

#[derive(Debug, Parser)]
#[command(name = "csi-mae", version, about = "Masked-autoencoder CSI experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one dataset file per configured scenario.
    Gen(Common),
    /// Masked-autoencoder pretraining on every configured scenario.
    Pretrain(Common),
    /// Train one task under one regime and report on the validation split.
    Train(Common),
    /// Evaluate a trained task checkpoint on a dataset's held-out split.
    Eval(Common),
    /// Evaluate a trained task checkpoint on foreign scenarios.
    Zeroshot(Common),
    /// Pretrain and train at every (dataset size, model size) point.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides run.out.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen(c)
            | Command::Pretrain(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::Zeroshot(c)
            | Command::Sweep(c) => c,
        }
    }
}

/// 1 for invalid input, 2 for I/O and file-format failures, 3 for numeric
/// failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::BadMagic { .. }
        | Error::VersionMismatch { .. }
        | Error::Truncated { .. }
        | Error::Integrity { .. } => 2,
        Error::Numeric(_) => 3,
        Error::Shape(_) | Error::Contract(_) | Error::Config(_) | Error::Parse { .. } => 1,
    }
}

pub fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    if let Some(out) = &common.out {
        let out = out.to_str().ok_or_else(|| Error::Config("--out is not valid UTF-8".into()))?;
        cfg.set("run.out", out)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match resolve(cli.command.common()).and_then(|cfg| run(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Gen(_) => cmd_gen(cfg).map(drop),
        Command::Pretrain(_) => cmd_pretrain(cfg).map(drop),
        Command::Train(_) => cmd_train(cfg).map(drop),
        Command::Eval(_) => cmd_eval(cfg).map(drop),
        Command::Zeroshot(_) => cmd_zeroshot(cfg).map(drop),
        Command::Sweep(_) => cmd_sweep(cfg).map(drop),
    }
}

/// Seeds derived from `run.seed`, one per random stream.
pub struct Seeds {
    pub root: u64,
    pub init: u64,
    pub pretrain: u64,
    pub task: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Seeds {
            root,
            init: sample_seed(root, 1),
            pretrain: sample_seed(root, 2),
            task: sample_seed(root, 3),
        }
    }

    fn map(&self, names: &[&str]) -> BTreeMap<String, u64> {
        let all = [("root", self.root), ("init", self.init), ("pretrain", self.pretrain), ("task", self.task)];
        all.iter()
            .filter(|(n, _)| names.contains(n))
            .map(|(n, v)| (n.to_string(), *v))
            .collect()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Sidecar written next to every dataset file.
pub fn meta_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for label in cfg.scenarios() {
        let params = cfg.scenario(&label)?;
        let seed = label_seed(cfg.seed(), &label);
        let path = cfg.dataset_path(&label);
        generate_dataset(&params, seed, cfg.count() as u64, &path, cfg.workers())?;
        let meta = format!(
            "config_hash={}\nroot_seed={}\ndataset_seed={seed}\nscenario={label}\ncount={}\n",
            cfg.hash(),
            cfg.seed(),
            cfg.count()
        );
        write_text(&meta_path(&path), &meta)?;
        log::info!("wrote {} ({} samples)", path.display(), cfg.count());
        written.push(path);
    }
    Ok(written)
}

/// `(training part, held-out tail)` of a dataset file, checked against the
/// model dimensions.
pub fn load_split(cfg: &RunConfig, label: &str, model: &ModelConfig) -> Result<(Vec<CsiSample>, Vec<CsiSample>)> {
    let path = cfg.dataset_path(label);
    let (header, mut samples) = load_dataset(&path)?;
    if header.antennas as usize != model.antennas || header.subcarriers as usize != model.subcarriers {
        return Err(Error::shape(format!(
            "{} holds {}×{} channels, the model expects {}×{}",
            path.display(),
            header.antennas,
            header.subcarriers,
            model.antennas,
            model.subcarriers
        )));
    }
    let cut = samples.len().saturating_sub(cfg.heldout());
    let held = samples.split_off(cut);
    Ok((samples, held))
}

fn run_pretrain(
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    per_scenario: Option<usize>,
    dir: &Path,
    extra_meta: &[(&str, String)],
) -> Result<Checkpoint> {
    let seeds = Seeds::new(cfg.seed());
    let grid = model_cfg.grid();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for label in cfg.scenarios() {
        let (mut t, h) = load_split(cfg, &label, model_cfg)?;
        if let Some(n) = per_scenario {
            if n > t.len() {
                return Err(Error::Config(format!(
                    "{n} pretraining samples requested but {label} has {} outside the held-out split",
                    t.len()
                )));
            }
            t.truncate(n);
        }
        train.extend(patchify_all(&t, &grid)?);
        held.extend(patchify_all(&h, &grid)?);
    }
    let mut model = CsiMae::new(model_cfg.clone(), &mut ChaCha8Rng::seed_from_u64(seeds.init))?;
    let pcfg = cfg.pretrain_config(seeds.pretrain);
    let history = pretrain(&mut model, &train, &held, &pcfg)?;

    let mut meta = BTreeMap::from([
        ("config_hash".to_string(), cfg.hash()),
        ("root_seed".to_string(), seeds.root.to_string()),
        ("stage".to_string(), "pretrain".to_string()),
    ]);
    meta.extend(extra_meta.iter().map(|(k, v)| (k.to_string(), v.clone())));
    let ck = Checkpoint::from_model(&model, meta);
    let evals: Vec<_> = history
        .evals
        .iter()
        .map(|e| json!({"step": e.step, "heldout_masked_nmse_db": e.nmse_db}))
        .collect();
    write_json(
        &dir.join("history.json"),
        &json!({
            "config_hash": cfg.hash(),
            "seeds": seeds.map(&["root", "init", "pretrain"]),
            "steps": pcfg.steps,
            "train_samples": train.len(),
            "heldout_samples": held.len(),
            "losses": history.losses,
            "evals": evals,
        }),
    )?;
    write_json(&dir.join("timing.json"), &json!({ "wall_clock_s": history.wall_clock_s }))?;
    if let (Some(a), Some(b)) = (history.initial_db(), history.final_db()) {
        log::info!("pretraining: held-out masked NMSE {a:.3} dB -> {b:.3} dB");
    }
    Ok(ck)
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    let path = cfg.pretrain_checkpoint();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let ck = run_pretrain(cfg, &cfg.model()?, None, &dir, &[])?;
    ck.save(&path)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// Trains `task` under `regime` from `pretrained` and writes checkpoint,
/// report and history into `dir`.
fn run_train(
    cfg: &RunConfig,
    task: TaskKind,
    regime: crate::tasks::Regime,
    pretrained: Option<&Checkpoint>,
    model_cfg: &ModelConfig,
    dir: &Path,
    extra_notes: &[(&str, String)],
) -> Result<MetricsReport> {
    let seeds = Seeds::new(cfg.seed());
    let label = cfg.task_dataset();
    let (train, val) = load_split(cfg, &label, model_cfg)?;
    let tcfg = cfg.train_config(seeds.task);
    let (tm, history) = train_task(task, regime, pretrained, &train, &val, model_cfg, &tcfg)?;

    let seed_map = seeds.map(&["root", "init", "task"]);
    let mut report = zero_shot_eval(&tm, &label, &label, &val, seed_map.clone(), &cfg.hash())?;
    let unchanged = history.encoder_checksum_before == history.encoder_checksum_after;
    report.notes.insert("encoder_checksum_before".into(), history.encoder_checksum_before.clone());
    report.notes.insert("encoder_checksum_after".into(), history.encoder_checksum_after.clone());
    report.notes.insert("encoder_unchanged".into(), unchanged.to_string());
    report.notes.insert("steps".into(), tcfg.steps.to_string());
    report
        .notes
        .extend(extra_notes.iter().map(|(k, v)| (k.to_string(), v.clone())));

    let mut meta = BTreeMap::from([
        ("config_hash".to_string(), cfg.hash()),
        ("root_seed".to_string(), seeds.root.to_string()),
        ("dataset".to_string(), label.clone()),
    ]);
    meta.extend(extra_notes.iter().map(|(k, v)| (k.to_string(), v.clone())));
    tm.to_checkpoint(meta).save(&dir.join("checkpoint.csim"))?;
    write_report(&dir.join("report.json"), &report)?;
    let val_points: Vec<_> = history
        .val
        .iter()
        .map(|v| json!({"step": v.step, "metric": v.metric}))
        .collect();
    write_json(
        &dir.join("history.json"),
        &json!({
            "task": task.to_string(),
            "regime": regime.to_string(),
            "config_hash": cfg.hash(),
            "seeds": seed_map,
            "validation_metric": if task == TaskKind::Positioning { "rmse_m" } else { "nmse_db" },
            "losses": history.losses,
            "validation": val_points,
        }),
    )?;
    write_json(&dir.join("timing.json"), &json!({ "wall_clock_s": history.wall_clock_s }))?;
    log::info!("{task}/{regime}: validation {:.4}", history.final_val().unwrap_or(f64::NAN));
    Ok(report)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<MetricsReport> {
    let model_cfg = cfg.model()?;
    let regime = cfg.regime();
    let pretrained = if regime.needs_checkpoint() {
        Some(Checkpoint::load(&cfg.pretrain_checkpoint())?)
    } else {
        None
    };
    let dir = cfg
        .task_checkpoint()
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    run_train(cfg, cfg.task(), regime, pretrained.as_ref(), &model_cfg, &dir, &[])
}

fn load_task_model(cfg: &RunConfig) -> Result<(TaskModel, String)> {
    let ck = Checkpoint::load(&cfg.task_checkpoint())?;
    let tm = TaskModel::from_checkpoint(&ck)?;
    let source = ck.meta.get("dataset").cloned().unwrap_or_else(|| cfg.task_dataset());
    Ok((tm, source))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let (tm, source) = load_task_model(cfg)?;
    let label = cfg.eval_dataset();
    let (_, held) = load_split(cfg, &label, tm.model.config())?;
    let seeds = Seeds::new(cfg.seed()).map(&["root"]);
    let report = zero_shot_eval(&tm, &source, &label, &held, seeds, &cfg.hash())?;
    let path = cfg
        .out_dir()
        .join("eval")
        .join(format!("{}-{}-{label}.json", tm.task, tm.regime));
    write_report(&path, &report)?;
    log::info!("wrote {}", path.display());
    Ok(report)
}

pub fn cmd_zeroshot(cfg: &RunConfig) -> Result<Vec<MetricsReport>> {
    let (tm, source) = load_task_model(cfg)?;
    let seeds = Seeds::new(cfg.seed()).map(&["root"]);
    let mut reports = Vec::new();
    for target in cfg.zeroshot_targets() {
        let (_, held) = load_split(cfg, &target, tm.model.config())?;
        let report = zero_shot_eval(&tm, &source, &target, &held, seeds.clone(), &cfg.hash())?;
        let path = cfg
            .out_dir()
            .join("zeroshot")
            .join(format!("{}-{source}_to_{target}.json", tm.task));
        write_report(&path, &report)?;
        log::info!("{source} -> {target}: {:?} dB", report.nmse_db);
        reports.push(report);
    }
    Ok(reports)
}

/// One row of the scaling table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub samples_per_scenario: usize,
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    /// Against the smallest dataset size at the same model size.
    pub delta_data_pct: f64,
    /// Against the first model size at the same dataset size.
    pub delta_model_pct: f64,
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("samples  model   NMSE(dB)   NMSE(lin)    Δdata(%)  Δmodel(%)\n");
    for r in rows {
        out.push_str(&format!(
            "{:>7}  {:>6}  {:>8.3}  {:>10.4e}  {:>+9.2}  {:>+9.2}\n",
            r.samples_per_scenario,
            format!("{}x{}", r.embed_dim, r.encoder_depth),
            r.nmse_db,
            r.nmse_linear,
            r.delta_data_pct,
            r.delta_model_pct
        ));
    }
    out
}

/// Fills the Δ columns from the linear NMSE of each row's reference point.
pub fn fill_deltas(rows: &mut [SweepRow]) {
    let snapshot = rows.to_vec();
    let first_size = snapshot.iter().map(|r| r.samples_per_scenario).min();
    let first_model = snapshot.first().map(|r| (r.embed_dim, r.encoder_depth));
    for r in rows.iter_mut() {
        let data_ref = snapshot
            .iter()
            .find(|s| Some(s.samples_per_scenario) == first_size && (s.embed_dim, s.encoder_depth) == (r.embed_dim, r.encoder_depth));
        let model_ref = snapshot
            .iter()
            .find(|s| Some((s.embed_dim, s.encoder_depth)) == first_model && s.samples_per_scenario == r.samples_per_scenario);
        r.delta_data_pct = data_ref.map_or(f64::NAN, |s| delta_percent(s.nmse_linear, r.nmse_linear));
        r.delta_model_pct = model_ref.map_or(f64::NAN, |s| delta_percent(s.nmse_linear, r.nmse_linear));
    }
}

pub fn sweep_point_dir(cfg: &RunConfig, n: usize, d: usize, l: usize) -> PathBuf {
    cfg.out_dir().join("sweep").join(format!("n{n}-m{d}x{l}"))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let task = cfg.task();
    if task == TaskKind::Positioning {
        return Err(Error::Config("the sweep compares NMSE; choose a reconstruction task".into()));
    }
    let points = cfg.sweep_points()?;
    let mut dirs = BTreeSet::new();
    for &(n, d, l) in &points {
        if !dirs.insert(sweep_point_dir(cfg, n, d, l)) {
            return Err(Error::Config(format!("sweep point n{n}-m{d}x{l} is listed twice; outputs would overlap")));
        }
    }
    let base = cfg.model()?;
    let mut rows = Vec::new();
    for (n, d, l) in points {
        let start = Instant::now();
        let model_cfg = ModelConfig {
            embed_dim: d,
            encoder_depth: l,
            ..base.clone()
        };
        model_cfg.validate()?;
        let dir = sweep_point_dir(cfg, n, d, l);
        let point = [("sweep_point", format!("n{n}-m{d}x{l}"))];
        let ck = run_pretrain(cfg, &model_cfg, Some(n), &dir.join("pretrain"), &point)?;
        ck.save(&dir.join("pretrain").join("checkpoint.csim"))?;
        let pretrained = cfg.sweep_regime().needs_checkpoint().then_some(&ck);
        let report = run_train(cfg, task, cfg.sweep_regime(), pretrained, &model_cfg, &dir.join("train"), &point)?;
        let (lin, db) = report
            .nmse_linear
            .zip(report.nmse_db)
            .ok_or_else(|| Error::contract("reconstruction report without NMSE"))?;
        log::info!("sweep point n{n}-m{d}x{l}: {db:.3} dB ({:.1}s)", start.elapsed().as_secs_f64());
        rows.push(SweepRow {
            samples_per_scenario: n,
            embed_dim: d,
            encoder_depth: l,
            nmse_linear: lin,
            nmse_db: db,
            delta_data_pct: f64::NAN,
            delta_model_pct: f64::NAN,
        });
    }
    fill_deltas(&mut rows);
    let table = sweep_table(&rows);
    print!("{table}");
    let sweep_dir = cfg.out_dir().join("sweep");
    write_text(&sweep_dir.join("table.txt"), &table)?;
    let json_rows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "samples_per_scenario": r.samples_per_scenario,
                "embed_dim": r.embed_dim,
                "encoder_depth": r.encoder_depth,
                "nmse_linear": r.nmse_linear,
                "nmse_db": r.nmse_db,
                "delta_data_pct": r.delta_data_pct,
                "delta_model_pct": r.delta_model_pct,
            })
        })
        .collect();
    write_json(
        &sweep_dir.join("summary.json"),
        &json!({
            "config_hash": cfg.hash(),
            "task": task.to_string(),
            "regime": cfg.sweep_regime().to_string(),
            "delta_definition": "(reference - point) / reference * 100 on linear NMSE",
            "rows": json_rows,
        }),
    )?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, d: usize, lin: f64) -> SweepRow {
        SweepRow {
            samples_per_scenario: n,
            embed_dim: d,
            encoder_depth: 1,
            nmse_linear: lin,
            nmse_db: crate::metrics::to_db(lin),
            delta_data_pct: f64::NAN,
            delta_model_pct: f64::NAN,
        }
    }

    #[test]
    fn deltas_use_the_reference_row() {
        let mut rows = vec![row(10, 8, 0.5), row(20, 8, 0.25), row(10, 16, 1.0), row(20, 16, 0.1)];
        fill_deltas(&mut rows);
        assert_eq!(rows[0].delta_data_pct, 0.0);
        assert_eq!(rows[1].delta_data_pct, 50.0);
        assert_eq!(rows[2].delta_model_pct, -100.0);
        assert!((rows[3].delta_data_pct - 90.0).abs() < 1e-12);
        assert!((rows[3].delta_model_pct - 60.0).abs() < 1e-12);
        let table = sweep_table(&rows);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("+50.00"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::Numeric("nan".into())), 3);
    }

    #[test]
    fn clap_usage_errors_exit_one() {
        assert_eq!(main_with_args(["csi-mae", "frobnicate"]), 1);
        assert_eq!(main_with_args(["csi-mae", "gen", "--seed", "x"]), 1);
        assert_eq!(main_with_args(["csi-mae", "--help"]), 0);
    }

    #[test]
    fn seed_and_out_flags_override() {
        let common = Common {
            config: None,
            seed: Some(9),
            out: Some(PathBuf::from("/tmp/elsewhere")),
        };
        let cfg = resolve(&common).unwrap();
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.out_dir(), PathBuf::from("/tmp/elsewhere"));
        assert_eq!(cfg.hash(), {
            let mut c = RunConfig::default();
            c.set("run.seed", "9").unwrap();
            c.hash()
        });
    }

    #[test]
    fn meta_sidecar_name() {
        assert_eq!(meta_path(Path::new("d/RMa-2.4.csid")), PathBuf::from("d/RMa-2.4.csid.meta"));
    }
}
