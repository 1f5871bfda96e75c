//! Experiment configuration file (TOML).
//!
//! Every field has a default, so an empty file is a valid configuration. Relative
//! paths in `[io]` resolve against the directory holding the config file. Individual
//! fields can be overridden with dotted `section.key=value` assignments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{Fading, LinkBudget};
use crate::dataset::Geometry;
use crate::error::{Error, Result};
use crate::gcn::GcnShape;
use crate::graph::NODE_FEATURES;
use crate::qgnn::QgnnShape;
use crate::train::{Arch, TrainConfig};
use crate::wmmse::WmmseConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Overrides `io.output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "D2D_QGNN_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pairs: usize,
    pub side: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub pathloss_exponent: f64,
    pub sigma2: f64,
    /// Per-pair weights; empty means all ones.
    pub alpha: Vec<f64>,
    pub p_max: f64,
    pub fading: Fading,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let budget = LinkBudget::default();
        Self {
            pairs: 4,
            side: 100.0,
            d_min: 2.0,
            d_max: 10.0,
            pathloss_exponent: budget.pathloss_exponent,
            sigma2: budget.sigma2,
            alpha: Vec::new(),
            p_max: budget.p_max,
            fading: budget.fading,
        }
    }
}

impl ScenarioConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry {
            pairs: self.pairs,
            side: self.side,
            d_min: self.d_min,
            d_max: self.d_max,
        }
    }

    pub fn budget(&self) -> LinkBudget {
        LinkBudget {
            pathloss_exponent: self.pathloss_exponent,
            sigma2: self.sigma2,
            alpha: self.alpha.clone(),
            p_max: self.p_max,
            fading: self.fading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Node feature width `F`.
    pub features: usize,
    /// QGCL layers `L`.
    pub layers: usize,
    /// Entangling blocks per QGCL circuit.
    pub depth: usize,
    /// Leaves per star.
    pub k: usize,
    /// GCN hidden width `H`.
    pub hidden: usize,
    /// GCN layers `L_c`.
    pub gcn_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Qgnn,
            features: NODE_FEATURES,
            layers: 2,
            depth: 2,
            k: 2,
            hidden: 16,
            gcn_layers: 2,
        }
    }
}

impl ModelConfig {
    pub fn qgnn_shape(&self) -> QgnnShape {
        QgnnShape {
            features: self.features,
            layers: self.layers,
            depth: self.depth,
            k: self.k,
        }
    }

    pub fn gcn_shape(&self) -> GcnShape {
        GcnShape {
            features: self.features,
            hidden: self.hidden,
            layers: self.gcn_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub oracle: bool,
    pub oracle_levels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            oracle: false,
            oracle_levels: 33,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/<arch>_checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Fill the `seconds` column of report CSVs with wall-clock times.
    pub timing: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("out/dataset.jsonl"),
            output_dir: PathBuf::from("out"),
            checkpoint: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub wmmse: WmmseConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario: ScenarioConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            wmmse: WmmseConfig::default(),
            eval: EvalConfig::default(),
            io: IoConfig::default(),
        }
    }
}

fn parse_override(assignment: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((path, value))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses non-table field {key:?}")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text and applies `section.key=value` overrides on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and resolves its relative `[io]` paths against the file's
    /// directory. The output-dir environment override applies afterwards.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.io.dataset = base.join(&cfg.io.dataset);
        cfg.io.output_dir = base.join(&cfg.io.output_dir);
        cfg.io.checkpoint = cfg.io.checkpoint.map(|c| base.join(c));
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.io.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return fail(format!("unsupported config version {}", self.version));
        }
        let s = &self.scenario;
        if s.pairs == 0 {
            return fail("scenario.pairs must be at least 1".into());
        }
        if !(s.d_min > 0.0 && s.d_min <= s.d_max && s.d_max <= s.side) {
            return fail(format!(
                "scenario needs 0 < d_min <= d_max <= side, got {} / {} / {}",
                s.d_min, s.d_max, s.side
            ));
        }
        if !(s.sigma2 > 0.0) || !(s.p_max > 0.0) || !(s.pathloss_exponent >= 0.0) {
            return fail("scenario needs sigma2 > 0, p_max > 0 and pathloss_exponent >= 0".into());
        }
        if !s.alpha.is_empty() && s.alpha.len() != s.pairs {
            return fail(format!(
                "scenario.alpha has {} entries for {} pairs",
                s.alpha.len(),
                s.pairs
            ));
        }
        if s.alpha.iter().any(|a| !(*a >= 0.0)) {
            return fail("scenario.alpha entries must be non-negative".into());
        }
        let m = &self.model;
        if m.features != NODE_FEATURES {
            return fail(format!(
                "model.features = {} but node features have width {NODE_FEATURES}",
                m.features
            ));
        }
        if m.layers == 0 || m.depth == 0 || m.k == 0 || m.hidden == 0 || m.gcn_layers == 0 {
            return fail("model layers, depth, k, hidden and gcn_layers must all be >= 1".into());
        }
        self.train.validate()?;
        if self.train.test_size == 0 {
            return fail("train.test_size must be at least 1".into());
        }
        self.wmmse.validate().or_else(|e| fail(e.to_string()))?;
        if self.eval.oracle_levels < 2 {
            return fail("eval.oracle_levels must be at least 2".into());
        }
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.io
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.io.output_dir.join(format!("{}_checkpoint.json", self.model.arch)))
    }

    pub fn report_path(&self) -> PathBuf {
        self.io.output_dir.join(format!("{}_report.csv", self.model.arch))
    }
}
