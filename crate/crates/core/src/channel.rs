//! D2D network geometry, interference channels, SINR and weighted sum rate.
//!
//! Channel gains are indexed `g(k, m)`: transmitter `k` to receiver `m`. The power
//! variable `p_m` enters the SINR inside the squared magnitude `|g_mm p_m|^2`, so it
//! behaves as a transmit amplitude bounded by `p_max`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Positions of `M` transmitter/receiver pairs inside a square of edge `side` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub side: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
}

fn check_geometry(pairs: usize, side: f64, d_min: f64, d_max: f64) -> Result<()> {
    if pairs == 0 {
        return Err(Error::InvalidGeometry("at least one pair is required".into()));
    }
    if !(d_min > 0.0 && d_min.is_finite()) {
        return Err(Error::InvalidGeometry(format!("d_min = {d_min} must be positive")));
    }
    if d_min > d_max {
        return Err(Error::InvalidGeometry(format!(
            "d_min = {d_min} exceeds d_max = {d_max}"
        )));
    }
    if !(d_max <= side && side.is_finite()) {
        return Err(Error::InvalidGeometry(format!("d_max = {d_max} exceeds side = {side}")));
    }
    Ok(())
}

impl Scenario {
    /// Builds a scenario from explicit positions, checking every invariant.
    pub fn from_positions(side: f64, d_min: f64, d_max: f64, tx: Vec<Point>, rx: Vec<Point>) -> Result<Self> {
        check_geometry(tx.len(), side, d_min, d_max)?;
        Error::check_len(tx.len(), rx.len())?;
        let inside = |p: &Point| p.iter().all(|&c| (0.0..=side).contains(&c));
        for (m, (&t, &r)) in tx.iter().zip(&rx).enumerate() {
            if !inside(&t) || !inside(&r) {
                return Err(Error::InvalidGeometry(format!("pair {m} lies outside the region")));
            }
            let d = dist(t, r);
            if d < d_min || d > d_max {
                return Err(Error::InvalidGeometry(format!(
                    "pair {m} distance {d} outside [{d_min}, {d_max}]"
                )));
            }
        }
        Ok(Self {
            side,
            d_min,
            d_max,
            seed: 0,
            tx,
            rx,
        })
    }

    pub fn pairs(&self) -> usize {
        self.tx.len()
    }

    /// Distance from transmitter `k` to receiver `m`.
    pub fn link_distance(&self, k: usize, m: usize) -> f64 {
        dist(self.tx[k], self.rx[m])
    }
}

/// Draws `pairs` D2D links uniformly in the square. Each transmitter is uniform in the
/// region; its receiver sits at a uniform distance in `[d_min, d_max]` and a uniform
/// bearing, redrawn until it lands inside the region.
pub fn generate_scenario(pairs: usize, side: f64, d_min: f64, d_max: f64, seed: u64) -> Result<Scenario> {
    check_geometry(pairs, side, d_min, d_max)?;
    let mut rng = seed::rng(seed);
    let mut tx = Vec::with_capacity(pairs);
    let mut rx = Vec::with_capacity(pairs);
    while tx.len() < pairs {
        let t = [rng.random::<f64>() * side, rng.random::<f64>() * side];
        let r = d_min + (d_max - d_min) * rng.random::<f64>();
        let bearing = 2.0 * PI * rng.random::<f64>();
        let q = [t[0] + r * bearing.cos(), t[1] + r * bearing.sin()];
        if q.iter().all(|&c| (0.0..=side).contains(&c)) {
            let d = dist(t, q);
            // Rounding in the polar offset can nudge the distance past a bound.
            if d >= d_min && d <= d_max {
                tx.push(t);
                rx.push(q);
            }
        }
    }
    Ok(Scenario {
        side,
        d_min,
        d_max,
        seed,
        tx,
        rx,
    })
}

/// Large-scale attenuation `(1 + r)^(-eta)` applied to the gain power `|g|^2`.
pub fn pathloss(distance: f64, exponent: f64) -> f64 {
    (1.0 + distance).powf(-exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    #[default]
    Rayleigh,
    None,
}

/// Propagation and link-budget constants used to turn a scenario into channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub pathloss_exponent: f64,
    pub sigma2: f64,
    /// One weight per pair; an empty vector means unit weights.
    pub alpha: Vec<f64>,
    pub p_max: f64,
    pub fading: Fading,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            pathloss_exponent: 3.0,
            sigma2: 1e-2,
            alpha: Vec::new(),
            p_max: 1.0,
            fading: Fading::Rayleigh,
        }
    }
}

impl LinkBudget {
    pub fn weights(&self, pairs: usize) -> Vec<f64> {
        if self.alpha.is_empty() {
            vec![1.0; pairs]
        } else {
            self.alpha.clone()
        }
    }
}

/// One draw of the interference channel together with the link budget it is scored under.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pairs: usize,
    /// Row-major: `gains[k * pairs + m] = g_km`.
    gains: Vec<Complex64>,
    sigma2: Vec<f64>,
    alpha: Vec<f64>,
    p_max: f64,
}

impl ChannelRealization {
    /// `gains` is row-major with `gains[k * pairs + m]` the gain from transmitter `k` to receiver `m`.
    pub fn new(pairs: usize, gains: Vec<Complex64>, sigma2: Vec<f64>, alpha: Vec<f64>, p_max: f64) -> Result<Self> {
        if pairs == 0 {
            return Err(Error::InvalidArgument("a realization needs at least one pair".into()));
        }
        Error::check_len(pairs * pairs, gains.len())?;
        Error::check_len(pairs, sigma2.len())?;
        Error::check_len(pairs, alpha.len())?;
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::InvalidArgument("channel gains must be finite".into()));
        }
        if sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("noise powers must be positive".into()));
        }
        if alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        if !(p_max > 0.0 && p_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("p_max = {p_max} must be positive")));
        }
        Ok(Self {
            pairs,
            gains,
            sigma2,
            alpha,
            p_max,
        })
    }

    /// Convenience constructor with uniform noise power from a real gain-amplitude matrix.
    pub fn from_real(rows: &[Vec<f64>], sigma2: f64, alpha: Vec<f64>, p_max: f64) -> Result<Self> {
        let pairs = rows.len();
        let mut gains = Vec::with_capacity(pairs * pairs);
        for row in rows {
            Error::check_len(pairs, row.len())?;
            gains.extend(row.iter().map(|&g| Complex64::new(g, 0.0)));
        }
        Self::new(pairs, gains, vec![sigma2; pairs], alpha, p_max)
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn g(&self, k: usize, m: usize) -> Complex64 {
        self.gains[k * self.pairs + m]
    }

    /// `|g_km|^2`.
    pub fn gain2(&self, k: usize, m: usize) -> f64 {
        self.g(k, m).norm_sqr()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Same realization with every gain multiplied by `c` and noise by `c^2`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.pairs,
            self.gains.iter().map(|g| g * c).collect(),
            self.sigma2.iter().map(|s| s * c * c).collect(),
            self.alpha.clone(),
            self.p_max,
        )
    }

    /// Relabels pairs: pair `i` of the result is pair `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Error::check_len(self.pairs, perm.len())?;
        let n = self.pairs;
        let mut gains = Vec::with_capacity(n * n);
        for &k in perm {
            gains.extend(perm.iter().map(|&m| self.g(k, m)));
        }
        Self::new(
            n,
            gains,
            perm.iter().map(|&i| self.sigma2[i]).collect(),
            perm.iter().map(|&i| self.alpha[i]).collect(),
            self.p_max,
        )
    }
}

/// Samples gains `g_km = sqrt(pathloss(|T_k - R_m|)) * h_km` with `h_km ~ CN(0, 1)`.
pub fn realize_channels(scenario: &Scenario, budget: &LinkBudget, seed: u64) -> Result<ChannelRealization> {
    if !(budget.pathloss_exponent >= 0.0) {
        return Err(Error::InvalidArgument("pathloss exponent must be non-negative".into()));
    }
    let n = scenario.pairs();
    let alpha = budget.weights(n);
    let mut rng = seed::rng(seed);
    let mut gains = Vec::with_capacity(n * n);
    for k in 0..n {
        for m in 0..n {
            let amp = pathloss(scenario.link_distance(k, m), budget.pathloss_exponent).sqrt();
            let h = match budget.fading {
                Fading::Rayleigh => {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                }
                Fading::None => Complex64::new(1.0, 0.0),
            };
            gains.push(h * amp);
        }
    }
    ChannelRealization::new(n, gains, vec![budget.sigma2; n], alpha, budget.p_max)
}

/// Transmit amplitudes, one per pair, each inside `[0, p_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>, p_max: f64) -> Result<Self> {
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=p_max).contains(&value) {
                return Err(Error::InfeasiblePower { index, value, p_max });
            }
        }
        Ok(Self(p))
    }

    pub(crate) fn new_unchecked(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn full(pairs: usize, p_max: f64) -> Self {
        Self(vec![p_max; pairs])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_power(channels: &ChannelRealization, p: &[f64]) -> Result<()> {
    Error::check_len(channels.pairs(), p.len())?;
    let p_max = channels.p_max();
    match p.iter().position(|v| !(0.0..=p_max).contains(v)) {
        Some(index) => Err(Error::InfeasiblePower {
            index,
            value: p[index],
            p_max,
        }),
        None => Ok(()),
    }
}

/// Per-receiver SINR `|g_mm p_m|^2 / (sum_{k != m} |g_km p_k|^2 + sigma_m^2)`.
pub fn sinr(channels: &ChannelRealization, p: &PowerVector) -> Result<Vec<f64>> {
    check_power(channels, p.as_slice())?;
    Ok(sinr_raw(channels, p.as_slice()))
}

pub(crate) fn sinr_raw(channels: &ChannelRealization, p: &[f64]) -> Vec<f64> {
    let n = channels.pairs();
    (0..n)
        .map(|m| {
            let interference: f64 = (0..n)
                .filter(|&k| k != m)
                .map(|k| (channels.g(k, m) * p[k]).norm_sqr())
                .sum();
            (channels.g(m, m) * p[m]).norm_sqr() / (interference + channels.sigma2()[m])
        })
        .collect()
}

/// `sum_m alpha_m log2(1 + gamma_m)` in bps/Hz.
pub fn weighted_sum_rate(gamma: &[f64], alpha: &[f64]) -> Result<f64> {
    Error::check_len(gamma.len(), alpha.len())?;
    if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::InvalidArgument(format!("SINR {g} must be non-negative")));
    }
    Ok(gamma.iter().zip(alpha).map(|(g, a)| a * g.ln_1p()).sum::<f64>() / LN_2)
}

/// Weighted sum rate of `p` on `channels`.
pub fn sum_rate(channels: &ChannelRealization, p: &PowerVector) -> Result<f64> {
    weighted_sum_rate(&sinr(channels, p)?, channels.alpha())
}

pub(crate) fn sum_rate_raw(channels: &ChannelRealization, p: &[f64]) -> f64 {
    let gamma = sinr_raw(channels, p);
    gamma
        .iter()
        .zip(channels.alpha())
        .map(|(g, a)| a * g.ln_1p())
        .sum::<f64>()
        / LN_2
}

/// Analytic gradient of the weighted sum rate with respect to each `p_j`.
///
/// With `S_m = sum_k |g_km|^2 p_k^2 + sigma_m^2` and `I_m = S_m - |g_mm|^2 p_m^2`,
/// `log(1 + gamma_m) = log S_m - log I_m`, which differentiates term by term.
pub fn sum_rate_gradient(channels: &ChannelRealization, p: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(channels.pairs(), p.len())?;
    let n = channels.pairs();
    let mut grad = vec![0.0; n];
    for m in 0..n {
        let signal = channels.gain2(m, m) * p[m] * p[m];
        let total = (0..n).map(|k| channels.gain2(k, m) * p[k] * p[k]).sum::<f64>() + channels.sigma2()[m];
        let interference = total - signal;
        let a = channels.alpha()[m] / LN_2;
        for (j, gj) in grad.iter_mut().enumerate() {
            let d = 2.0 * channels.gain2(j, m) * p[j];
            *gj += a * d / total;
            if j != m {
                *gj -= a * d / interference;
            }
        }
    }
    Ok(grad)
}
