//! Command surface behind the `d2d-qgnn` binary: `gen`, `train`, `eval`, `config`.
//!
//! Exit codes: 0 on success, 2 for configuration and input problems, 3 when a run
//! aborts (non-finite loss, failed writes).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::checkpoint::{Checkpoint, Payload};
use crate::config::{ExperimentConfig, OUTPUT_DIR_ENV};
use crate::dataset::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::FeatureNorm;
use crate::train::{evaluate, prepare, train, wmmse_mean, Arch, Model, TrainReport};
use crate::wmmse::grid_search_oracle;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "d2d-qgnn", version, about = "Quantum GNN power control for D2D networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/test channel dataset.
    Gen(ConfigArgs),
    /// Train a model and write its report CSV and checkpoint.
    Train(ConfigArgs),
    /// Score a checkpoint on the test split against WMMSE.
    Eval(EvalArgs),
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (TOML). Built-in defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint to load instead of the configured one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also run the grid-search oracle on every test realization.
    #[arg(long)]
    pub oracle: bool,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.overrides),
            None => {
                let mut cfg = ExperimentConfig::from_toml("", &self.overrides)?;
                if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
                    cfg.io.output_dir = PathBuf::from(dir);
                }
                Ok(cfg)
            }
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteLoss { .. } | Error::Io { .. } => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist{hint}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub path: PathBuf,
    pub train: usize,
    pub test: usize,
}

impl fmt::Display for GenSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {} train + {} test realizations to {}",
            self.train,
            self.test,
            self.path.display()
        )
    }
}

pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<GenSummary> {
    let ds = generate_dataset(
        &cfg.scenario.geometry(),
        &cfg.scenario.budget(),
        cfg.train.train_size,
        cfg.train.test_size,
        cfg.train.seeds.data,
    )?;
    ds.write(&cfg.io.dataset)?;
    Ok(GenSummary {
        path: cfg.io.dataset.clone(),
        train: ds.train.len(),
        test: ds.test.len(),
    })
}

/// Reads the dataset and takes the configured number of train and test realizations.
fn load_splits(cfg: &ExperimentConfig) -> Result<(Vec<ChannelRealization>, Vec<ChannelRealization>)> {
    require_file(&cfg.io.dataset, "; run `d2d-qgnn gen` first")?;
    let ds = Dataset::read(&cfg.io.dataset)?;
    if ds.header.pairs != cfg.scenario.pairs {
        return Err(Error::Config(format!(
            "dataset has {} pairs but scenario.pairs = {}",
            ds.header.pairs, cfg.scenario.pairs
        )));
    }
    let (tr, te) = (cfg.train.train_size, cfg.train.test_size);
    if ds.train.len() < tr || ds.test.len() < te {
        return Err(Error::Config(format!(
            "dataset holds {}/{} train/test realizations, config asks for {tr}/{te}",
            ds.train.len(),
            ds.test.len()
        )));
    }
    let mut train = ds.train;
    let mut test = ds.test;
    train.truncate(tr);
    test.truncate(te);
    Ok((train, test))
}

fn build_model(cfg: &ExperimentConfig) -> Result<Model> {
    let init = cfg.train.seeds.init;
    match cfg.model.arch {
        Arch::Qgnn => Model::qgnn(cfg.model.qgnn_shape(), init),
        Arch::Gcn => Model::gcn(cfg.model.gcn_shape(), init),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub report_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

impl fmt::Display for TrainOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        writeln!(f, "arch {}, {} epochs", r.arch, r.epochs.len())?;
        if let Some(last) = r.epochs.last() {
            writeln!(f, "final train mean  {:.4} bps/Hz", last.train_mean)?;
            writeln!(f, "final test mean   {:.4} bps/Hz", last.test_mean)?;
            writeln!(
                f,
                "wmmse test mean   {:.4} bps/Hz (ratio {:.4})",
                r.wmmse_test_mean,
                last.test_mean / r.wmmse_test_mean
            )?;
        } else {
            writeln!(f, "wmmse test mean   {:.4} bps/Hz", r.wmmse_test_mean)?;
        }
        writeln!(f, "report     {}", self.report_path.display())?;
        write!(f, "checkpoint {}", self.checkpoint_path.display())
    }
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let (train_ch, test_ch) = load_splits(cfg)?;
    let norm = FeatureNorm::fit(&train_ch);
    let train_set = prepare(&train_ch, &norm);
    let test_set = prepare(&test_ch, &norm);
    let mut model = build_model(cfg)?;
    let mut report = train(&mut model, &train_set, &test_set, &cfg.train, &cfg.wmmse)?;

    let checkpoint_path = cfg.checkpoint_path();
    Checkpoint::from_model(&model, norm).write(&checkpoint_path)?;
    report.checkpoint = Some(checkpoint_path.display().to_string());

    let report_path = cfg.report_path();
    std::fs::create_dir_all(&cfg.io.output_dir).map_err(|e| Error::io(&cfg.io.output_dir, e))?;
    std::fs::write(&report_path, report.to_csv(cfg.io.timing)).map_err(|e| Error::io(&report_path, e))?;
    Ok(TrainOutcome {
        report,
        report_path,
        checkpoint_path,
    })
}

/// Rejects a checkpoint whose architecture or shape disagrees with the config.
fn check_compatible(ckpt: &Checkpoint, cfg: &ExperimentConfig) -> Result<()> {
    let m = &cfg.model;
    if ckpt.arch() != m.arch {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint holds a {} model, config asks for {}",
            ckpt.arch(),
            m.arch
        )));
    }
    let (have, want) = match &ckpt.model {
        Payload::Qgnn { shape, .. } => (
            format!(
                "F={} L={} depth={} k={}",
                shape.features, shape.layers, shape.depth, shape.k
            ),
            format!("F={} L={} depth={} k={}", m.features, m.layers, m.depth, m.k),
        ),
        Payload::Gcn { shape, .. } => (
            format!("F={} H={} L={}", shape.features, shape.hidden, shape.layers),
            format!("F={} H={} L={}", m.features, m.hidden, m.gcn_layers),
        ),
    };
    if have != want {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint has {have}, config has {want}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub arch: Arch,
    pub realizations: usize,
    pub model_mean: f64,
    pub wmmse_mean: f64,
    pub oracle_mean: Option<f64>,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "arch {}, {} test realizations", self.arch, self.realizations)?;
        writeln!(f, "model mean   {:.4} bps/Hz", self.model_mean)?;
        write!(
            f,
            "wmmse mean   {:.4} bps/Hz (model/wmmse {:.4})",
            self.wmmse_mean,
            self.model_mean / self.wmmse_mean
        )?;
        if let Some(o) = self.oracle_mean {
            write!(
                f,
                "\noracle mean  {:.4} bps/Hz (model/oracle {:.4}, wmmse/oracle {:.4})",
                o,
                self.model_mean / o,
                self.wmmse_mean / o
            )?;
        }
        Ok(())
    }
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>, oracle: bool) -> Result<EvalSummary> {
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.checkpoint_path());
    require_file(&path, "; run `d2d-qgnn train` first")?;
    let ckpt = Checkpoint::read(&path)?;
    check_compatible(&ckpt, cfg)?;
    let model = ckpt.to_model()?;
    let (_, test_ch) = load_splits(cfg)?;
    let test_set = prepare(&test_ch, &ckpt.norm);
    let model_mean = evaluate(&model, &test_set, &cfg.train.seeds)?;
    let wmmse_mean = wmmse_mean(&test_ch, &cfg.wmmse)?;
    let oracle_mean = if oracle || cfg.eval.oracle {
        let levels = cfg.eval.oracle_levels;
        let rates = test_ch
            .par_iter()
            .map(|ch| grid_search_oracle(ch, levels).map(|(_, r)| r))
            .collect::<Result<Vec<f64>>>()?;
        Some(rates.iter().sum::<f64>() / rates.len() as f64)
    } else {
        None
    };
    Ok(EvalSummary {
        arch: model.arch(),
        realizations: test_ch.len(),
        model_mean,
        wmmse_mean,
        oracle_mean,
    })
}

/// Runs one parsed command, writing its human-readable summary to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    let text = match &cli.command {
        Command::Gen(args) => cmd_gen(&args.load()?)?.to_string(),
        Command::Train(args) => cmd_train(&args.load()?)?.to_string(),
        Command::Eval(args) => cmd_eval(&args.config.load()?, args.checkpoint.as_deref(), args.oracle)?.to_string(),
        Command::Config(args) => args.load()?.to_toml().trim_end().to_owned(),
    };
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path, arch: &str) -> ExperimentConfig {
        let text = format!(
            "[scenario]\npairs = 3\n[model]\narch = \"{arch}\"\nlayers = 1\ndepth = 1\nhidden = 4\n\
             [train]\nepochs = 2\ntrain_size = 6\ntest_size = 3\n\
             [io]\ndataset = \"{}\"\noutput_dir = \"{}\"\n",
            dir.join("ds.jsonl").display(),
            dir.join("out").display()
        );
        ExperimentConfig::from_toml(&text, &[]).unwrap()
    }

    #[test]
    fn gen_train_eval_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for arch in ["qgnn", "gcn"] {
            let cfg = small_config(dir.path(), arch);
            let gen = cmd_gen(&cfg).unwrap();
            assert_eq!((gen.train, gen.test), (6, 3));
            let trained = cmd_train(&cfg).unwrap();
            assert!(trained.report_path.is_file() && trained.checkpoint_path.is_file());
            let eval = cmd_eval(&cfg, None, true).unwrap();
            assert_eq!(eval.model_mean, trained.report.final_test_mean().unwrap());
            assert_eq!(eval.wmmse_mean, trained.report.wmmse_test_mean);
            assert!(eval.oracle_mean.unwrap() >= eval.wmmse_mean * 0.98);
        }
    }

    #[test]
    fn mismatched_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "qgnn");
        cmd_gen(&cfg).unwrap();
        let trained = cmd_train(&cfg).unwrap();
        let ckpt = Some(trained.checkpoint_path.as_path());

        let mut other = cfg.clone();
        other.model.arch = Arch::Gcn;
        let err = cmd_eval(&other, ckpt, false).unwrap_err();
        assert!(matches!(err, Error::CheckpointMismatch(_)));
        assert_eq!(exit_code(&err), EXIT_CONFIG);

        let mut other = cfg.clone();
        other.model.layers = 2;
        assert!(matches!(
            cmd_eval(&other, ckpt, false),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "gcn");
        let err = cmd_train(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        cmd_gen(&cfg).unwrap();
        let err = cmd_eval(&cfg, None, false).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);

        let mut bigger = cfg.clone();
        bigger.train.train_size = 100;
        assert!(matches!(cmd_train(&bigger), Err(Error::Config(_))));
    }

    #[test]
    fn runtime_failures_exit_with_abort_code() {
        let nan = Error::NonFiniteLoss {
            epoch: 1,
            step: 0,
            instance: 3,
            value: f64::NAN,
        };
        assert_eq!(exit_code(&nan), EXIT_ABORT);
        assert!(nan.to_string().contains("instance 3"));
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn parse_errors_exit_with_config_code() {
        assert_eq!(main_with_args(["d2d-qgnn", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(
            main_with_args(["d2d-qgnn", "config", "--set", "train.lr=-1"]),
            EXIT_CONFIG
        );
        assert_eq!(main_with_args(["d2d-qgnn", "config"]), EXIT_OK);
    }
}
