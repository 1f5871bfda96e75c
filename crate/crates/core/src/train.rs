//! Unsupervised training: Adam on the negative weighted sum rate.
//!
//! No labels are used anywhere on the training path. WMMSE is only run to produce the
//! reference line of the report, after the fact and on the test split.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sum_rate, ChannelRealization, PowerVector};
use crate::error::{Error, Result};
use crate::gcn::{Gcn, GcnShape};
use crate::graph::{build_graph, FeatureNorm, InterferenceGraph};
use crate::qgnn::{Qgnn, QgnnShape};
use crate::seed;
use crate::wmmse::{wmmse_allocate, WmmseConfig};

/// Stream label for evaluation star seeds; training streams use the epoch number.
const EVAL_STREAM: u64 = u64::MAX;
const SHUFFLE_STREAM: u64 = u64::MAX - 1;

/// Half-width of the uniform parameter initialization.
pub const INIT_HALF_WIDTH: f64 = 0.1;

pub fn unsupervised_loss(p: &PowerVector, channels: &ChannelRealization) -> Result<f64> {
    Ok(-sum_rate(channels, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step. Pure: returns the new parameters and state.
pub fn adam_step(
    params: &[f64],
    grad: &[f64],
    state: &AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(Vec<f64>, AdamState)> {
    Error::check_len(params.len(), grad.len())?;
    Error::check_len(params.len(), state.m.len())?;
    Error::check_len(params.len(), state.v.len())?;
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut next = AdamState {
        m: Vec::with_capacity(params.len()),
        v: Vec::with_capacity(params.len()),
        t,
    };
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        out.push(params[i] - lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps));
        next.m.push(m);
        next.v.push(v);
    }
    Ok((out, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Qgnn,
    Gcn,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Qgnn => "qgnn",
            Arch::Gcn => "gcn",
        })
    }
}

/// Either trainable power model behind one interface.
#[derive(Debug, Clone)]
pub enum Model {
    Qgnn(Qgnn),
    Gcn(Gcn),
}

impl Model {
    pub fn qgnn(shape: QgnnShape, init_seed: u64) -> Result<Self> {
        let mut m = Qgnn::new(shape)?;
        m.init_uniform(INIT_HALF_WIDTH, init_seed);
        Ok(Model::Qgnn(m))
    }

    pub fn gcn(shape: GcnShape, init_seed: u64) -> Result<Self> {
        let mut m = Gcn::new(shape)?;
        m.init_uniform(INIT_HALF_WIDTH, init_seed);
        Ok(Model::Gcn(m))
    }

    pub fn arch(&self) -> Arch {
        match self {
            Model::Qgnn(_) => Arch::Qgnn,
            Model::Gcn(_) => Arch::Gcn,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Model::Qgnn(m) => m.num_params(),
            Model::Gcn(m) => m.num_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Model::Qgnn(m) => m.params.to_flat(),
            Model::Gcn(m) => m.params.clone(),
        }
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        match self {
            Model::Qgnn(m) => m.params.set_flat(flat),
            Model::Gcn(m) => {
                Error::check_len(m.params.len(), flat.len())?;
                m.params.copy_from_slice(flat);
                Ok(())
            }
        }
    }

    /// Powers for one realization. `star_seed` is ignored by the GCN.
    pub fn powers(&self, graph: &InterferenceGraph, p_max: f64, star_seed: u64) -> Result<PowerVector> {
        match self {
            Model::Qgnn(m) => Ok(m.forward(graph, star_seed, p_max)?.0),
            Model::Gcn(m) => m.forward(graph, p_max),
        }
    }

    pub fn loss_and_gradient(
        &self,
        graph: &InterferenceGraph,
        channels: &ChannelRealization,
        star_seed: u64,
    ) -> Result<(f64, Vec<f64>)> {
        match self {
            Model::Qgnn(m) => m.loss_and_gradient(graph, star_seed, channels),
            Model::Gcn(m) => m.loss_and_gradient(graph, channels),
        }
    }
}

/// A channel realization with its interference graph under a frozen normalization.
#[derive(Debug, Clone)]
pub struct Sample {
    pub channels: ChannelRealization,
    pub graph: InterferenceGraph,
}

pub fn prepare(channels: &[ChannelRealization], norm: &FeatureNorm) -> Vec<Sample> {
    channels
        .iter()
        .map(|ch| Sample {
            graph: build_graph(ch, norm),
            channels: ch.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub stars: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            stars: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Realizations per Adam step; 0 means the whole training set.
    pub batch: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seeds: Seeds,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 5e-2,
            batch: 0,
            train_size: 300,
            test_size: 100,
            seeds: Seeds::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        if self.train_size == 0 {
            return Err(Error::Config("train_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn batch_size(&self, available: usize) -> usize {
        if self.batch == 0 {
            available
        } else {
            self.batch.min(available)
        }
    }
}

/// Star seed used when scoring realization `index` outside training.
pub fn eval_star_seed(seeds: &Seeds, index: usize) -> u64 {
    seed::derive(seeds.stars, &[EVAL_STREAM, index as u64])
}

fn train_star_seed(seeds: &Seeds, epoch: usize, index: usize) -> u64 {
    seed::derive(seeds.stars, &[epoch as u64, index as u64])
}

/// Arithmetic mean of the weighted sum rate over `samples` with frozen star seeds.
pub fn evaluate(model: &Model, samples: &[Sample], seeds: &Seeds) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty set".into()));
    }
    let rates = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = model.powers(&s.graph, s.channels.p_max(), eval_star_seed(seeds, i))?;
            sum_rate(&s.channels, &p)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Mean WMMSE weighted sum rate over `channels`.
pub fn wmmse_mean(channels: &[ChannelRealization], cfg: &WmmseConfig) -> Result<f64> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty set".into()));
    }
    let rates = channels
        .par_iter()
        .map(|ch| wmmse_allocate(ch, cfg).map(|o| o.objective))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mean: f64,
    pub test_mean: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub arch: Arch,
    pub epochs: Vec<EpochRecord>,
    pub wmmse_test_mean: f64,
    pub checkpoint: Option<String>,
}

pub const CSV_HEADER: &str = "epoch,train_mean_bpshz,test_mean_bpshz,wmmse_test_mean_bpshz,seconds";

impl TrainReport {
    pub fn final_test_mean(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_mean)
    }

    /// One baseline row (epoch 0, WMMSE only) followed by one row per epoch. The
    /// `seconds` column is left empty unless `timing` is set, so untimed reports are
    /// reproducible byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        writeln!(out, "0,,,{},", self.wmmse_test_mean).unwrap();
        for e in &self.epochs {
            let secs = if timing {
                format!("{:.3}", e.seconds)
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_mean, e.test_mean, self.wmmse_test_mean, secs
            )
            .unwrap();
        }
        out
    }
}

/// Trains `model` in place and reports per-epoch train/test means.
///
/// Each epoch visits the training set in batches (shuffled when the batch is smaller
/// than the set) and takes one Adam step per batch on the mean gradient.
pub fn train(
    model: &mut Model,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
    wmmse: &WmmseConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs non-empty train and test sets".into(),
        ));
    }
    let test_channels: Vec<ChannelRealization> = test_set.iter().map(|s| s.channels.clone()).collect();
    let wmmse_test_mean = wmmse_mean(&test_channels, wmmse)?;

    let batch = cfg.batch_size(train_set.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut state = AdamState::new(model.num_params());
    let mut params = model.params();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        if batch < train_set.len() {
            order.shuffle(&mut seed::rng(seed::derive(
                cfg.seeds.data,
                &[SHUFFLE_STREAM, epoch as u64],
            )));
        }
        for (step, chunk) in order.chunks(batch).enumerate() {
            let snapshot = &*model;
            let parts = chunk
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    snapshot
                        .loss_and_gradient(&s.graph, &s.channels, train_star_seed(&cfg.seeds, epoch, i))
                        .map(|r| (i, r))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; params.len()];
            for (i, (loss, g)) in parts {
                if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        step,
                        instance: i,
                        value: loss,
                    });
                }
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let (next, next_state) = adam_step(&params, &grad, &state, cfg.lr, &cfg.adam)?;
            params = next;
            state = next_state;
            model.set_params(&params)?;
        }
        let train_mean = evaluate(model, train_set, &cfg.seeds)?;
        let test_mean = evaluate(model, test_set, &cfg.seeds)?;
        epochs.push(EpochRecord {
            epoch,
            train_mean,
            test_mean,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainReport {
        arch: model.arch(),
        epochs,
        wmmse_test_mean,
        checkpoint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, realize_channels, LinkBudget};

    fn realizations(n: usize, pairs: usize, seed0: u64) -> Vec<ChannelRealization> {
        (0..n as u64)
            .map(|i| {
                let s = generate_scenario(pairs, 100.0, 2.0, 10.0, seed0 + i).unwrap();
                realize_channels(&s, &LinkBudget::default(), seed0 + i).unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_examples() {
        let ch = ChannelRealization::from_real(&[vec![1.0]], 1.0, vec![1.0], 1.0).unwrap();
        assert_eq!(
            unsupervised_loss(&PowerVector::new(vec![0.0], 1.0).unwrap(), &ch).unwrap(),
            0.0
        );
        assert_eq!(
            unsupervised_loss(&PowerVector::new(vec![1.0], 1.0).unwrap(), &ch).unwrap(),
            -1.0
        );
        for ch in realizations(5, 4, 0) {
            let p = PowerVector::new(vec![0.2, 0.4, 0.6, 0.8], 1.0).unwrap();
            let wsr = sum_rate(&ch, &p).unwrap();
            assert!((unsupervised_loss(&p, &ch).unwrap() + wsr).abs() <= 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let state = AdamState {
            m: vec![0.5, -0.2],
            v: vec![0.1, 0.3],
            t: 3,
        };
        let (p, s) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &state, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(s.m, vec![0.45, -0.2 * 0.9]);
        assert_close!(s.v[0], 0.0999, 1e-15);
        assert_eq!(s.t, 4);
        // the decayed first moment still moves the parameters
        assert!(p[0] < 1.0 && p[1] > 2.0);

        let fresh = AdamState::new(2);
        let (p, _) = adam_step(&[1.0, 2.0], &[0.0, 0.0], &fresh, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (p, _) = adam_step(
            &[0.0, 0.0, 0.0],
            &[3.0, -0.01, 1e3],
            &AdamState::new(3),
            0.05,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_close!(p[0], -0.05, 1e-9);
        assert_close!(p[1], 0.05, 1e-6);
        assert_close!(p[2], -0.05, 1e-9);
    }

    #[test]
    fn adam_is_pure() {
        let s = AdamState::new(2);
        let a = adam_step(&[0.3, 0.1], &[0.2, -0.4], &s, 0.01, &AdamConfig::default()).unwrap();
        let b = adam_step(&[0.3, 0.1], &[0.2, -0.4], &s, 0.01, &AdamConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(adam_step(&[0.3], &[0.2, -0.4], &s, 0.01, &AdamConfig::default()).is_err());
    }

    fn small_setup(arch: Arch) -> (Model, Vec<Sample>, Vec<Sample>) {
        let tr = realizations(12, 3, 100);
        let te = realizations(4, 3, 500);
        let norm = FeatureNorm::fit(&tr);
        let model = match arch {
            Arch::Qgnn => Model::qgnn(
                QgnnShape {
                    features: 2,
                    layers: 1,
                    depth: 1,
                    k: 2,
                },
                4,
            )
            .unwrap(),
            Arch::Gcn => Model::gcn(
                GcnShape {
                    hidden: 4,
                    ..GcnShape::default()
                },
                4,
            )
            .unwrap(),
        };
        (model, prepare(&tr, &norm), prepare(&te, &norm))
    }

    #[test]
    fn zero_epochs_only_baseline() {
        let (mut model, tr, te) = small_setup(Arch::Qgnn);
        let before = model.params();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &tr, &te, &cfg, &WmmseConfig::default()).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(model.params(), before);
        let csv = report.to_csv(false);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), format!("0,,,{},", report.wmmse_test_mean));
    }

    #[test]
    fn runs_are_reproducible() {
        for arch in [Arch::Qgnn, Arch::Gcn] {
            let cfg = TrainConfig {
                epochs: 3,
                batch: 5,
                ..TrainConfig::default()
            };
            let (mut a, tr, te) = small_setup(arch);
            let (mut b, _, _) = small_setup(arch);
            let ra = train(&mut a, &tr, &te, &cfg, &WmmseConfig::default()).unwrap();
            let rb = train(&mut b, &tr, &te, &cfg, &WmmseConfig::default()).unwrap();
            assert_eq!(ra.epochs.len(), 3);
            assert_eq!(ra.to_csv(false), rb.to_csv(false));
            assert_eq!(a.params(), b.params());
        }
    }

    #[test]
    fn reported_means_are_plain_averages() {
        let (mut model, tr, te) = small_setup(Arch::Gcn);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &tr, &te, &cfg, &WmmseConfig::default()).unwrap();
        let by_hand = te
            .iter()
            .enumerate()
            .map(|(i, s)| {
                sum_rate(
                    &s.channels,
                    &model.powers(&s.graph, 1.0, eval_star_seed(&cfg.seeds, i)).unwrap(),
                )
                .unwrap()
            })
            .sum::<f64>()
            / te.len() as f64;
        assert_close!(report.final_test_mean().unwrap(), by_hand, 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let (mut model, tr, te) = small_setup(Arch::Gcn);
        let cfg = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut model, &tr, &te, &cfg, &WmmseConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let (_, tr, te) = small_setup(Arch::Gcn);
        let mut model = Model::gcn(
            GcnShape {
                hidden: 4,
                ..GcnShape::default()
            },
            4,
        )
        .unwrap();
        let mut bad = model.params();
        let head_bias = bad.len() - 1;
        bad[head_bias] = f64::NAN;
        model.set_params(&bad).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        match train(&mut model, &tr, &te, &cfg, &WmmseConfig::default()) {
            Err(Error::NonFiniteLoss { epoch: 1, step: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
