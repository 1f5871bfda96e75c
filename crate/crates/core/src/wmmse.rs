//! Scalar WMMSE power control and an exhaustive grid-search oracle.
//!
//! Each WMMSE sweep updates the receive coefficients `u`, then the MSE weights `w`,
//! then the transmit amplitudes `v` (all pairs at once per block). With the receive
//! block and the weight block solved exactly, the weighted sum rate never decreases
//! from one sweep to the next.

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{sum_rate_raw, ChannelRealization, PowerVector};
use crate::error::{Error, Result};
use crate::seed;

/// Smallest magnitude allowed for `1 - u* g v` before inverting it.
const WEIGHT_GUARD: f64 = 1e-12;

/// Largest number of grid points the oracle will evaluate.
pub const ORACLE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WmmseInit {
    #[default]
    FullPower,
    /// Uniform in `(0, p_max]`, drawn from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmmseConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub init: WmmseInit,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            init: WmmseInit::FullPower,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("WMMSE max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("WMMSE tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutcome {
    /// Best iterate seen.
    pub power: PowerVector,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted sum rate at the initial point and after every sweep.
    pub history: Vec<f64>,
}

/// Runs scalar WMMSE from `cfg.init` until the objective changes by less than `cfg.tol`
/// or `cfg.max_iter` sweeps have run.
pub fn wmmse_allocate(channels: &ChannelRealization, cfg: &WmmseConfig) -> Result<WmmseOutcome> {
    cfg.validate()?;
    let n = channels.pairs();
    let p_max = channels.p_max();
    let alpha = channels.alpha();
    let mut v: Vec<f64> = match cfg.init {
        WmmseInit::FullPower => vec![p_max; n],
        WmmseInit::Random(s) => {
            let mut rng = seed::rng(s);
            (0..n).map(|_| p_max * (1.0 - rng.random::<f64>())).collect()
        }
    };

    let mut objective = sum_rate_raw(channels, &v);
    let mut history = vec![objective];
    let mut best = (v.clone(), objective);
    let mut converged = false;
    let mut iterations = 0;
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    let mut w = vec![0.0; n];

    while iterations < cfg.max_iter {
        iterations += 1;
        for m in 0..n {
            let received: f64 = (0..n).map(|k| channels.gain2(k, m) * v[k] * v[k]).sum::<f64>() + channels.sigma2()[m];
            u[m] = channels.g(m, m) * v[m] / received;
            let e = (Complex64::new(1.0, 0.0) - u[m].conj() * channels.g(m, m) * v[m]).re;
            w[m] = 1.0 / e.max(WEIGHT_GUARD);
        }
        for m in 0..n {
            let num = alpha[m] * w[m] * (u[m].conj() * channels.g(m, m)).re;
            let den: f64 = (0..n)
                .map(|k| alpha[k] * w[k] * u[k].norm_sqr() * channels.gain2(m, k))
                .sum();
            // A zero denominator means v_m does not affect the MSE cost; keep it.
            if den > 0.0 {
                v[m] = (num / den).clamp(0.0, p_max);
            }
        }
        let next = sum_rate_raw(channels, &v);
        history.push(next);
        if next > best.1 {
            best = (v.clone(), next);
        }
        let delta = (next - objective).abs();
        objective = next;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(WmmseOutcome {
        power: PowerVector::new_unchecked(best.0),
        objective: best.1,
        converged,
        iterations,
        history,
    })
}

/// Exhaustive search over `{0, p_max/(levels-1), ..., p_max}^M`.
///
/// Ties keep the first grid point in lexicographic order (pair 0 varies slowest).
pub fn grid_search_oracle(channels: &ChannelRealization, levels: usize) -> Result<(PowerVector, f64)> {
    if levels < 2 {
        return Err(Error::InvalidArgument("the oracle needs at least 2 levels".into()));
    }
    let n = channels.pairs();
    let too_large = || Error::InstanceTooLarge {
        levels,
        pairs: n,
        limit: ORACLE_LIMIT,
    };
    let total = u32::try_from(n)
        .ok()
        .and_then(|e| (levels as u64).checked_pow(e))
        .filter(|&t| t <= ORACLE_LIMIT)
        .ok_or_else(too_large)?;

    let step = channels.p_max() / (levels - 1) as f64;
    let grid: Vec<f64> = (0..levels)
        .map(|i| {
            if i == levels - 1 {
                channels.p_max()
            } else {
                i as f64 * step
            }
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut p = vec![0.0; n];
    let mut best = (p.clone(), f64::NEG_INFINITY);
    for _ in 0..total {
        for (pm, &i) in p.iter_mut().zip(&idx) {
            *pm = grid[i];
        }
        let value = sum_rate_raw(channels, &p);
        if value > best.1 {
            best = (p.clone(), value);
        }
        // odometer increment, last pair fastest
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < levels {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok((PowerVector::new_unchecked(best.0), best.1))
}
