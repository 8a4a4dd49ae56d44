//! Run configuration: flat `key = value` text with dotted namespaces.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected. [`SCHEMA`] is the authoritative key list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::channelgen::ScenarioParams;
use crate::error::{Error, Result};
use crate::model::{MaskPattern, ModelConfig, PretrainConfig};
use crate::numerics::AdamConfig;
use crate::tasks::{Regime, TaskKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    U64,
    Usize,
    F64,
    Text,
    /// Filesystem location; excluded from the config hash.
    Path,
    /// Comma-separated list.
    List,
    /// A number or `auto`.
    AutoF64,
    /// A non-negative integer or `auto`.
    AutoUsize,
    Task,
    Regime,
    /// `interleaved`, `contiguous` or `auto`.
    Pattern,
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn k(key: &'static str, kind: Kind, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, kind, default, doc }
}

pub const SCHEMA: &[KeySpec] = &[
    k("run.seed", Kind::U64, "0", "root seed; every other seed is derived from it"),
    k("run.out", Kind::Path, "runs", "output directory"),
    k("data.scenarios", Kind::List, "RMa-0.7,RMa-2.4,RMa-3.5,UMa-4.9,UMi-5", "scenario-frequency labels <UMi|UMa|RMa>-<GHz>"),
    k("data.count", Kind::Usize, "2000", "samples per scenario"),
    k("data.heldout", Kind::Usize, "200", "trailing samples of each file held out for evaluation"),
    k("data.dir", Kind::Path, "", "dataset directory; empty means <run.out>/data"),
    k("data.workers", Kind::Usize, "1", "generation threads; output does not depend on it"),
    k("data.bs_rows", Kind::Usize, "4", "planar array rows"),
    k("data.bs_cols", Kind::Usize, "4", "planar array columns"),
    k("data.num_subcarriers", Kind::Usize, "64", "subcarriers"),
    k("data.subcarrier_spacing_khz", Kind::F64, "30", "15, 30 or 60"),
    k("data.cell_radius", Kind::AutoF64, "auto", "metres; auto keeps the scenario default"),
    k("data.num_nlos_paths", Kind::AutoUsize, "auto", "auto keeps the scenario default"),
    k("data.los_probability", Kind::AutoF64, "auto", "auto keeps the scenario default"),
    k("data.delay_spread_ns", Kind::AutoF64, "auto", "auto keeps the scenario default"),
    k("data.bs_height", Kind::AutoF64, "auto", "metres; auto keeps the scenario default"),
    k("data.sector_width", Kind::AutoF64, "auto", "radians, at most pi; auto is pi"),
    k("model.antennas", Kind::Usize, "16", "must equal data.bs_rows * data.bs_cols"),
    k("model.subcarriers", Kind::Usize, "64", "must equal data.num_subcarriers"),
    k("model.patch_rows", Kind::Usize, "4", "antennas per patch"),
    k("model.patch_cols", Kind::Usize, "8", "subcarriers per patch"),
    k("model.embed_dim", Kind::Usize, "64", "encoder width"),
    k("model.encoder_depth", Kind::Usize, "4", "encoder blocks"),
    k("model.encoder_heads", Kind::Usize, "4", "encoder attention heads"),
    k("model.decoder_dim", Kind::Usize, "32", "decoder width"),
    k("model.decoder_depth", Kind::Usize, "2", "decoder blocks"),
    k("model.decoder_heads", Kind::Usize, "4", "decoder attention heads"),
    k("model.mlp_ratio", Kind::Usize, "4", "MLP hidden width over model width"),
    k("model.mask_ratio", Kind::F64, "0.75", "pretraining mask ratio"),
    k("optim.beta1", Kind::F64, "0.9", "Adam first-moment decay"),
    k("optim.beta2", Kind::F64, "0.999", "Adam second-moment decay"),
    k("optim.eps", Kind::F64, "1e-8", "Adam epsilon"),
    k("pretrain.steps", Kind::Usize, "300", "optimizer steps"),
    k("pretrain.batch_size", Kind::Usize, "16", "samples per step"),
    k("pretrain.lr", Kind::F64, "1e-3", "learning rate"),
    k("pretrain.eval_every", Kind::Usize, "50", "held-out evaluation interval in steps; 0 for start and end only"),
    k("pretrain.eval_mask_seed", Kind::U64, "24301", "seed of the fixed held-out masks"),
    k("pretrain.checkpoint", Kind::Path, "", "written by pretrain, read by frozen/finetune; empty means <run.out>/pretrain/checkpoint.csim"),
    k("task.name", Kind::Task, "extrapolation-antenna", "extrapolation-antenna|extrapolation-subcarrier|feedback|positioning"),
    k("task.regime", Kind::Regime, "finetune", "supervised|frozen|finetune"),
    k("task.dataset", Kind::Text, "RMa-2.4", "label of the training dataset in data.dir"),
    k("task.steps", Kind::Usize, "300", "optimizer steps"),
    k("task.batch_size", Kind::Usize, "16", "samples per step"),
    k("task.lr", Kind::F64, "1e-3", "learning rate"),
    k("task.eval_every", Kind::Usize, "50", "validation interval in steps; 0 for start and end only"),
    k("task.code_len", Kind::Usize, "128", "feedback code length in reals"),
    k("task.mask_pattern", Kind::Pattern, "auto", "extrapolation mask layout; auto is interleaved for antenna, contiguous for subcarrier"),
    k("task.head_lr_scale", Kind::AutoF64, "auto", "position head learning-rate multiplier; auto is the coordinate standard deviation"),
    k("task.checkpoint", Kind::Path, "", "written by train, read by eval and zeroshot; empty means <run.out>/train/<task>-<regime>/checkpoint.csim"),
    k("eval.dataset", Kind::Text, "", "label evaluated by eval; empty means task.dataset"),
    k("zeroshot.targets", Kind::List, "RMa-0.7,RMa-3.5", "labels evaluated by zeroshot"),
    k("sweep.dataset_sizes", Kind::List, "1000,1800", "pretraining samples per scenario at each data point"),
    k("sweep.model_sizes", Kind::List, "32x2,64x4", "encoder sizes as <embed_dim>x<encoder_depth>"),
    k("sweep.regime", Kind::Regime, "frozen", "regime of the downstream run at each point"),
];

fn key_spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

fn check_value(kind: Kind, value: &str) -> std::result::Result<(), String> {
    let auto = value == "auto";
    let ok = match kind {
        Kind::U64 => value.parse::<u64>().is_ok(),
        Kind::Usize | Kind::AutoUsize if auto => kind == Kind::AutoUsize,
        Kind::Usize | Kind::AutoUsize => value.parse::<usize>().is_ok(),
        Kind::F64 | Kind::AutoF64 if auto => kind == Kind::AutoF64,
        Kind::F64 | Kind::AutoF64 => value.parse::<f64>().is_ok_and(f64::is_finite),
        Kind::Text | Kind::Path => true,
        Kind::List => value.split(',').all(|v| !v.trim().is_empty()),
        Kind::Task => value.parse::<TaskKind>().is_ok(),
        Kind::Regime => value.parse::<Regime>().is_ok(),
        Kind::Pattern => auto || value.parse::<MaskPattern>().is_ok(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{value:?} is not a valid {kind:?} value"))
    }
}

/// A fully resolved configuration: every schema key has a value.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: SCHEMA.iter().map(|s| (s.key.to_string(), s.default.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parses `text`; `path` is only used in error messages.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        let mut unknown = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err(parse_err(format!("{key} already set on line {first}")));
            }
            match key_spec(key) {
                None => unknown.push(format!("{key} (line {})", i + 1)),
                Some(s) => {
                    check_value(s.kind, value).map_err(|m| parse_err(format!("{key}: {m}")))?;
                    cfg.values.insert(key.to_string(), value.to_string());
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("{key} is not a schema key"))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = key_spec(key).ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
        check_value(s.kind, value).map_err(|m| Error::Config(format!("{key}: {m}")))?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> T {
        self.get(key)
            .parse()
            .unwrap_or_else(|_| panic!("{key} was validated on load"))
    }

    fn auto<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        match self.get(key) {
            "auto" => None,
            _ => Some(self.num(key)),
        }
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.get(key).split(',').map(|s| s.trim().to_string()).collect()
    }

    fn path_or(&self, key: &str, fallback: PathBuf) -> PathBuf {
        match self.get(key) {
            "" => fallback,
            p => PathBuf::from(p),
        }
    }

    /// Cross-key checks. Every problem is reported at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for label in self.scenarios().iter().chain(&self.zeroshot_targets()) {
            if let Err(e) = self.scenario(label) {
                bad.push(e.to_string());
            }
        }
        if let Err(e) = self.scenario(self.get("task.dataset")) {
            bad.push(e.to_string());
        }
        match self.model() {
            Ok(m) => {
                let (a, sc) = (self.num::<usize>("data.bs_rows") * self.num::<usize>("data.bs_cols"), self.num::<usize>("data.num_subcarriers"));
                if m.antennas != a || m.subcarriers != sc {
                    bad.push(format!(
                        "model.antennas/model.subcarriers ({}, {}) do not match the data dimensions ({a}, {sc})",
                        m.antennas, m.subcarriers
                    ));
                }
            }
            Err(e) => bad.push(e.to_string()),
        }
        if self.num::<usize>("data.heldout") > self.num::<usize>("data.count") {
            bad.push("data.heldout exceeds data.count".into());
        }
        for (key, v) in [("pretrain.lr", self.num::<f64>("pretrain.lr")), ("task.lr", self.num::<f64>("task.lr"))] {
            if v < 0.0 {
                bad.push(format!("{key}={v} is negative"));
            }
        }
        if let Some(s) = self.auto::<f64>("task.head_lr_scale") {
            if s <= 0.0 {
                bad.push(format!("task.head_lr_scale={s} must be positive"));
            }
        }
        if let Err(e) = self.sweep_points() {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Canonical `key=value` lines in schema order.
    pub fn to_text(&self) -> String {
        SCHEMA.iter().map(|s| format!("{}={}\n", s.key, self.values[s.key])).collect()
    }

    /// SHA-256 over the canonical text without the path-valued keys, so
    /// the same experiment hashes equally wherever it writes.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in SCHEMA.iter().filter(|s| s.kind != Kind::Path) {
            h.update(format!("{}={}\n", s.key, self.values[s.key]).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.num("run.seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("run.out"))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path_or("data.dir", self.out_dir().join("data"))
    }

    pub fn dataset_path(&self, label: &str) -> PathBuf {
        self.data_dir().join(format!("{label}.csid"))
    }

    pub fn pretrain_checkpoint(&self) -> PathBuf {
        self.path_or("pretrain.checkpoint", self.out_dir().join("pretrain").join("checkpoint.csim"))
    }

    pub fn task_dir(&self) -> PathBuf {
        self.out_dir()
            .join("train")
            .join(format!("{}-{}", self.task(), self.regime()))
    }

    pub fn task_checkpoint(&self) -> PathBuf {
        self.path_or("task.checkpoint", self.task_dir().join("checkpoint.csim"))
    }

    pub fn scenarios(&self) -> Vec<String> {
        self.list("data.scenarios")
    }

    pub fn zeroshot_targets(&self) -> Vec<String> {
        self.list("zeroshot.targets")
    }

    pub fn count(&self) -> usize {
        self.num("data.count")
    }

    pub fn heldout(&self) -> usize {
        self.num("data.heldout")
    }

    pub fn workers(&self) -> usize {
        self.num("data.workers")
    }

    pub fn task(&self) -> TaskKind {
        self.num("task.name")
    }

    pub fn regime(&self) -> Regime {
        self.num("task.regime")
    }

    pub fn task_dataset(&self) -> String {
        self.get("task.dataset").to_string()
    }

    pub fn eval_dataset(&self) -> String {
        match self.get("eval.dataset") {
            "" => self.task_dataset(),
            d => d.to_string(),
        }
    }

    pub fn sweep_regime(&self) -> Regime {
        self.num("sweep.regime")
    }

    /// Desk parameters for `label` with the `data.*` overrides applied.
    pub fn scenario(&self, label: &str) -> Result<ScenarioParams> {
        let mut p = ScenarioParams::from_label(label)?;
        p.bs_array = (self.num("data.bs_rows"), self.num("data.bs_cols"));
        p.num_subcarriers = self.num("data.num_subcarriers");
        p.subcarrier_spacing_khz = self.num("data.subcarrier_spacing_khz");
        if let Some(v) = self.auto("data.cell_radius") {
            p.cell_radius = v;
        }
        if let Some(v) = self.auto("data.num_nlos_paths") {
            p.num_nlos_paths = v;
        }
        if let Some(v) = self.auto("data.los_probability") {
            p.los_probability = v;
        }
        if let Some(v) = self.auto::<f64>("data.delay_spread_ns") {
            p.delay_spread = v * 1e-9;
        }
        if let Some(v) = self.auto("data.bs_height") {
            p.bs_height = v;
        }
        if let Some(v) = self.auto("data.sector_width") {
            p.sector_width = v;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let map: BTreeMap<String, String> = self
            .values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("model.").map(|k| (k.to_string(), v.clone())))
            .collect();
        ModelConfig::from_map(&map)
    }

    fn adam(&self, lr_key: &str) -> AdamConfig {
        AdamConfig {
            lr: self.num(lr_key),
            beta1: self.num("optim.beta1"),
            beta2: self.num("optim.beta2"),
            eps: self.num("optim.eps"),
        }
    }

    pub fn pretrain_config(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            steps: self.num("pretrain.steps"),
            batch_size: self.num("pretrain.batch_size"),
            adam: self.adam("pretrain.lr"),
            seed,
            eval_every: self.num("pretrain.eval_every"),
            eval_mask_seed: self.num("pretrain.eval_mask_seed"),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.num("task.steps"),
            batch_size: self.num("task.batch_size"),
            adam: self.adam("task.lr"),
            seed,
            eval_every: self.num("task.eval_every"),
            code_len: self.num("task.code_len"),
            mask_pattern: match self.get("task.mask_pattern") {
                "auto" => None,
                p => Some(p.parse().expect("validated on load")),
            },
            head_lr_scale: self.auto("task.head_lr_scale"),
        }
    }

    /// `(samples per scenario, embed_dim, encoder_depth)` for every sweep
    /// point, dataset size varying fastest.
    pub fn sweep_points(&self) -> Result<Vec<(usize, usize, usize)>> {
        let sizes = self
            .list("sweep.dataset_sizes")
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Config(format!("sweep.dataset_sizes entry {s:?} is not a positive integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let models = self
            .list("sweep.model_sizes")
            .iter()
            .map(|s| {
                s.split_once('x')
                    .and_then(|(d, l)| Some((d.parse::<usize>().ok()?, l.parse::<usize>().ok()?)))
                    .ok_or_else(|| Error::Config(format!("sweep.model_sizes entry {s:?} is not <embed_dim>x<depth>")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(models
            .iter()
            .flat_map(|&(d, l)| sizes.iter().map(move |&n| (n, d, l)))
            .collect())
    }
}

/// 64-bit value derived from a label, for per-dataset seeds that do not
/// depend on list order.
pub fn label_seed(root: u64, label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let tag = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    crate::channelgen::sample_seed(root, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(Path::new("test.cfg"), text)
    }

    #[test]
    fn empty_file_is_the_default() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model().unwrap(), ModelConfig::default());
        assert_eq!(cfg.scenarios().len(), 5);
    }

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
        for s in SCHEMA {
            check_value(s.kind, s.default).unwrap();
        }
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = parse("model.embed_dim = 32\nmodel.width = 3\nfoo = 1\n").unwrap_err();
        let Error::Config(msg) = err else { panic!("config error expected") };
        assert!(msg.contains("model.width (line 2)") && msg.contains("foo (line 3)"), "{msg}");
    }

    #[test]
    fn malformed_lines_report_location() {
        match parse("# comment\n\nrun.seed 3\n").unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, "line 3"),
            e => panic!("unexpected {e}"),
        }
        match parse("run.seed = x\n").unwrap_err() {
            Error::Parse { location, message, .. } => {
                assert_eq!(location, "line 1");
                assert!(message.contains("run.seed"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse("run.seed=1\nrun.seed=2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = parse("  run.seed = 7   # trailing\n").unwrap();
        assert_eq!(cfg.seed(), 7);
    }

    #[test]
    fn cross_key_checks() {
        assert!(matches!(parse("model.antennas = 8\n"), Err(Error::Config(_))));
        assert!(matches!(parse("data.scenarios = XYZ-2.4\n"), Err(Error::Config(_))));
        assert!(matches!(parse("data.heldout = 5000\n"), Err(Error::Config(_))));
        assert!(matches!(parse("sweep.model_sizes = 32-2\n"), Err(Error::Config(_))));
        let cfg = parse("data.bs_rows = 2\ndata.bs_cols = 2\ndata.num_subcarriers = 8\nmodel.antennas = 4\nmodel.subcarriers = 8\nmodel.patch_rows = 2\nmodel.patch_cols = 2\n").unwrap();
        assert_eq!(cfg.scenario("UMi-5").unwrap().num_antennas(), 4);
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = parse("run.out = /tmp/a\n").unwrap();
        let b = parse("run.out = /tmp/b\n").unwrap();
        let c = parse("run.seed = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = parse("task.name = positioning\ndata.cell_radius = 100\n").unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn overrides_reach_the_scenario() {
        let cfg = parse("data.cell_radius = 100\ndata.num_nlos_paths = 0\ndata.los_probability = 1\n").unwrap();
        let p = cfg.scenario("RMa-2.4").unwrap();
        assert_eq!((p.cell_radius, p.num_nlos_paths, p.los_probability), (100.0, 0, 1.0));
        let d = RunConfig::default().scenario("RMa-2.4").unwrap();
        assert_eq!(d, ScenarioParams::desk(crate::channelgen::ScenarioKind::RMa, 2.4));
    }

    #[test]
    fn sweep_points_vary_dataset_size_fastest() {
        let cfg = parse("sweep.dataset_sizes = 10,20\nsweep.model_sizes = 16x1,32x2\n").unwrap();
        assert_eq!(
            cfg.sweep_points().unwrap(),
            vec![(10, 16, 1), (20, 16, 1), (10, 32, 2), (20, 32, 2)]
        );
    }

    #[test]
    fn label_seeds_are_order_free_and_distinct() {
        assert_eq!(label_seed(3, "RMa-2.4"), label_seed(3, "RMa-2.4"));
        assert_ne!(label_seed(3, "RMa-2.4"), label_seed(3, "RMa-3.5"));
        assert_ne!(label_seed(3, "RMa-2.4"), label_seed(4, "RMa-2.4"));
    }
}
