//! Sample-size bounds for the sample average approximation and a
//! Monte-Carlo harness for its feasibility guarantee.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Hold-out draws used to estimate a violation probability.
pub const HOLDOUT_SIZE: usize = 100_000;

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in (0, 1), got {v}"
        )))
    }
}

/// Samples needed for the empirical CDF to be uniformly within `ε` of the
/// true one with probability `1 − β`: `⌈ln(2/β) / (2ε²)⌉`.
pub fn dkw_sample_size(epsilon: f64, beta: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_open_unit("beta", beta)?;
    Ok(((2.0 / beta).ln() / (2.0 * epsilon * epsilon)).ceil() as u64)
}

/// Samples `N` after which every SAA-feasible point with budget `s` is
/// chance-feasible at level `α` with probability at least `1 − β`.
///
/// With `c = 2αs + ln(8/β²)`, the exact bound is
/// `⌈(c + √(c² − 4α²s²)) / (2α²)⌉` and the simplified one `⌈c / α²⌉`.
pub fn feasibility_sample_size(alpha: f64, s: u64, beta: f64, exact: bool) -> Result<u64> {
    check_open_unit("alpha", alpha)?;
    check_open_unit("beta", beta)?;
    let log_term = (8.0 / (beta * beta)).ln();
    let two_as = 2.0 * alpha * s as f64;
    let c = two_as + log_term;
    let value = if exact {
        // c² − (2αs)² factored to avoid cancellation.
        (c + (log_term * (log_term + 2.0 * two_as)).sqrt()) / (2.0 * alpha * alpha)
    } else {
        c / (alpha * alpha)
    };
    Ok(value.ceil() as u64)
}

/// `1 − 2√2 · exp(−2(α − s/N)² N)`; negative values are returned unchanged.
pub fn feasibility_confidence(alpha: f64, s: u64, n: u64) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let n_f = n as f64;
    if s as f64 >= alpha * n_f {
        return Err(Error::InvalidParameter(format!(
            "need s < αN, got s = {s}, αN = {}",
            alpha * n_f
        )));
    }
    let gap = alpha - s as f64 / n_f;
    Ok(1.0 - 2.0 * 2f64.sqrt() * (-2.0 * gap * gap * n_f).exp())
}

/// Lower bound `να*N` on the budget needed to keep a point with true
/// violation probability `α*` feasible, with its confidence
/// `1 − 2√2 · exp(−2(1 − ν)² α*² N)`.
pub fn s_lower_bound(nu: f64, alpha_star: f64, n: u64) -> Result<(f64, f64)> {
    check_open_unit("nu", nu)?;
    check_open_unit("alpha_star", alpha_star)?;
    let n_f = n as f64;
    let bound = nu * alpha_star * n_f;
    let gap = (1.0 - nu) * alpha_star;
    let conf = 1.0 - 2.0 * 2f64.sqrt() * (-2.0 * gap * gap * n_f).exp();
    Ok((bound, conf))
}

/// A random constraint `g(x, ξ) ∈ R^M` that can be sampled.
pub trait ScenarioFamily: Sync {
    /// `max_m g_m(x, ξ)` for one fresh draw `ξ`.
    fn scenario_max(&self, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> f64;
}

/// `g_m(x, ξ) = Σ_k ξ²_mk x_k² − b` with `ξ` standard normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptFamily {
    pub m: usize,
    pub b: f64,
}

impl ScenarioFamily for NormOptFamily {
    fn scenario_max(&self, x: &DVector<f64>, rng: &mut ChaCha8Rng) -> f64 {
        (0..self.m)
            .map(|_| {
                x.iter()
                    .map(|&v| {
                        let xi: f64 = rng.sample(StandardNormal);
                        xi * xi * v * v
                    })
                    .sum::<f64>()
                    - self.b
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOutcome {
    pub trials: usize,
    /// Trials whose `N`-sample made `x` feasible at budget `s`.
    pub qualifying: usize,
    /// Qualifying trials whose estimated violation probability is at most `α`.
    pub passing: usize,
    /// `passing / qualifying`.
    pub rate: f64,
    /// Largest estimated violation probability among qualifying trials.
    pub max_violation: f64,
}

/// Empirical check of the feasibility guarantee.
///
/// Each trial draws a fresh `N`-sample; if at most `s` scenarios are
/// violated, the true violation probability of `x` is estimated from
/// `holdout` further draws and compared with `α`. Trial `i` uses the ChaCha8
/// stream `i` of `seed`, so results do not depend on thread scheduling.
pub fn monte_carlo_feasibility_with_holdout<F: ScenarioFamily>(
    family: &F,
    x: &DVector<f64>,
    alpha: f64,
    s: usize,
    n: usize,
    trials: usize,
    seed: u64,
    holdout: usize,
) -> Result<MonteCarloOutcome> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if n == 0 || holdout == 0 {
        return Err(Error::InvalidParameter(
            "N and the hold-out size must be positive".into(),
        ));
    }
    let violations: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let violated = (0..n)
                .filter(|_| family.scenario_max(x, &mut rng) > 0.0)
                .count();
            (violated <= s).then(|| {
                let bad = (0..holdout)
                    .filter(|_| family.scenario_max(x, &mut rng) > 0.0)
                    .count();
                bad as f64 / holdout as f64
            })
        })
        .collect();
    let estimates: Vec<f64> = violations.into_iter().flatten().collect();
    if estimates.is_empty() {
        return Err(Error::NoQualifyingTrials);
    }
    let passing = estimates.iter().filter(|&&p| p <= alpha).count();
    Ok(MonteCarloOutcome {
        trials,
        qualifying: estimates.len(),
        passing,
        rate: passing as f64 / estimates.len() as f64,
        max_violation: estimates.iter().copied().fold(0.0, f64::max),
    })
}

/// [`monte_carlo_feasibility_with_holdout`] with [`HOLDOUT_SIZE`] draws.
pub fn monte_carlo_feasibility<F: ScenarioFamily>(
    family: &F,
    x: &DVector<f64>,
    alpha: f64,
    s: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    monte_carlo_feasibility_with_holdout(family, x, alpha, s, n, trials, seed, HOLDOUT_SIZE)
}
