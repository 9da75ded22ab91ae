//! Ability estimation for a learner from a graded response pattern.
//!
//! Given a 0/1 pattern and the matching item difficulties, the maximum
//! likelihood ability is found by a one-dimensional Nelder-Mead search
//! restricted to a bounded interval. A brute-force grid search over the same
//! interval serves as the reference oracle in tests.
//!
//! Long patterns are cheap to handle: the caller draws a uniform subsample
//! (see [`subsample_indices`]) and estimates from that. The training loop in
//! [`crate::student`] does exactly this once per epoch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irt::log_sigmoid;

/// One epoch's ability estimate, together with the selection threshold
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AbilityEstimate {
    pub theta_hat: f64,
    /// Training epoch the estimate belongs to (set by the caller).
    pub epoch: usize,
    pub n_responses_used: usize,
    /// Extra slack added to the threshold after stagnation; see [`maybe_bump`].
    pub bump_offset: f64,
    /// `theta_hat + bump_offset`; items at or below this difficulty are
    /// eligible for training.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbilityEstConfig {
    /// Cap on the number of responses used per estimate.
    pub subsample_size: usize,
    pub search_lo: f64,
    pub search_hi: f64,
    pub nm_tol: f64,
    pub nm_max_iter: usize,
    /// Redraw the subsample every epoch; when false, one draw is reused.
    pub resample_each_epoch: bool,
}

impl Default for AbilityEstConfig {
    fn default() -> Self {
        Self {
            subsample_size: 1000,
            search_lo: -6.0,
            search_hi: 6.0,
            nm_tol: 1e-4,
            nm_max_iter: 100,
            resample_each_epoch: true,
        }
    }
}

impl AbilityEstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subsample_size == 0 {
            return Err(Error::InvalidInput("ability.subsample_size must be >= 1".into()));
        }
        if !self.search_lo.is_finite() || !self.search_hi.is_finite() {
            return Err(Error::InvalidInput("ability search bounds must be finite".into()));
        }
        if self.search_lo >= self.search_hi {
            return Err(Error::InvalidInput(format!(
                "ability search interval is empty: [{}, {}]",
                self.search_lo, self.search_hi
            )));
        }
        if self.nm_tol.is_nan() || self.nm_tol <= 0.0 {
            return Err(Error::InvalidInput("ability.nm_tol must be positive".into()));
        }
        if self.nm_max_iter == 0 {
            return Err(Error::InvalidInput("ability.nm_max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Grade predictions against gold labels: 1 where they match, 0 elsewhere.
pub fn response_pattern<T: PartialEq>(gold: &[T], predicted: &[T]) -> Result<Vec<u8>> {
    if gold.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "response_pattern length mismatch: {} gold vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    Ok(gold
        .iter()
        .zip(predicted)
        .map(|(g, p)| u8::from(g == p))
        .collect())
}

/// Uniform subsample of `k` indices out of `0..n_total`, without
/// replacement, returned in ascending order. When `k >= n_total` every index
/// is returned.
pub fn subsample_indices<R: Rng + ?Sized>(n_total: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k >= n_total {
        return (0..n_total).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n_total, k).into_vec();
    idx.sort_unstable();
    idx
}

fn check_pattern(pattern: &[u8], difficulties: &[f64]) -> Result<()> {
    if pattern.len() != difficulties.len() {
        return Err(Error::InvalidInput(format!(
            "pattern has {} responses but {} difficulties were given",
            pattern.len(),
            difficulties.len()
        )));
    }
    if pattern.is_empty() {
        return Err(Error::InvalidInput("cannot estimate ability from an empty pattern".into()));
    }
    if let Some(bad) = difficulties.iter().find(|b| !b.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "difficulties must be finite, found {bad}"
        )));
    }
    if pattern.iter().any(|&z| z > 1) {
        return Err(Error::InvalidInput("response pattern entries must be 0 or 1".into()));
    }
    Ok(())
}

/// Negative log-likelihood of the pattern at ability `theta`, with `theta`
/// clamped into the search interval so the optimizer cannot wander off to
/// infinity on all-correct / all-wrong patterns.
fn neg_loglik(theta: f64, pattern: &[u8], difficulties: &[f64], lo: f64, hi: f64) -> f64 {
    let theta = theta.clamp(lo, hi);
    let mut total = 0.0;
    for (&z, &b) in pattern.iter().zip(difficulties) {
        let x = theta - b;
        total -= if z == 1 { log_sigmoid(x) } else { log_sigmoid(-x) };
    }
    total
}

/// Exhaustive reference search: evaluate the likelihood on an even grid over
/// `[lo, hi]` and return the best ability (lowest value wins ties). This is
/// the oracle the Nelder-Mead path is validated against; it shares no code
/// with the optimizer.
pub fn grid_search_ability(
    pattern: &[u8],
    difficulties: &[f64],
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    check_pattern(pattern, difficulties)?;
    if step.is_nan() || step <= 0.0 || lo >= hi {
        return Err(Error::InvalidInput("grid search needs lo < hi and step > 0".into()));
    }
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    let mut best_theta = lo;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..=n {
        // endpoint-exact grid: i = n lands on `hi` with no rounding drift
        let theta = lo + (hi - lo) * i as f64 / n as f64;
        let mut ll = 0.0;
        for (&z, &b) in pattern.iter().zip(difficulties) {
            let p = 1.0 / (1.0 + (-(theta - b)).exp());
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            ll += if z == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        if ll > best_ll {
            best_ll = ll;
            best_theta = theta;
        }
    }
    Ok(best_theta)
}

/// One-dimensional Nelder-Mead minimization with the standard coefficients
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5). The "simplex"
/// is a pair of points; iteration stops when it collapses below `tol`.
fn nelder_mead_1d<F: Fn(f64) -> f64>(f: F, x0: f64, x1: f64, tol: f64, max_iter: usize) -> f64 {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let (mut best, mut worst) = (x0, x1);
    let (mut f_best, mut f_worst) = (f(x0), f(x1));
    if f_worst < f_best {
        std::mem::swap(&mut best, &mut worst);
        std::mem::swap(&mut f_best, &mut f_worst);
    }
    for _ in 0..max_iter {
        if (best - worst).abs() < tol {
            break;
        }
        let reflected = best + ALPHA * (best - worst);
        let f_reflected = f(reflected);
        if f_reflected < f_best {
            let expanded = best + GAMMA * (best - worst);
            let f_expanded = f(expanded);
            if f_expanded < f_reflected {
                (worst, f_worst) = (best, f_best);
                (best, f_best) = (expanded, f_expanded);
            } else {
                (worst, f_worst) = (best, f_best);
                (best, f_best) = (reflected, f_reflected);
            }
        } else if f_reflected < f_worst {
            (worst, f_worst) = (reflected, f_reflected);
        } else {
            let contracted = best + RHO * (worst - best);
            let f_contracted = f(contracted);
            if f_contracted < f_worst {
                (worst, f_worst) = (contracted, f_contracted);
            } else {
                worst = best + SIGMA * (worst - best);
                f_worst = f(worst);
            }
            if f_worst < f_best {
                std::mem::swap(&mut best, &mut worst);
                std::mem::swap(&mut f_best, &mut f_worst);
            }
        }
    }
    best
}

/// Maximum likelihood ability for a graded pattern, restricted to
/// `[cfg.search_lo, cfg.search_hi]`.
///
/// Degenerate all-correct (all-wrong) patterns have no interior maximum; the
/// returned estimate is exactly the upper (lower) search bound. The returned
/// `epoch` is 0 and `bump_offset` 0; the training loop fills those in via
/// [`maybe_bump`].
pub fn estimate_ability(
    pattern: &[u8],
    difficulties: &[f64],
    cfg: &AbilityEstConfig,
) -> Result<AbilityEstimate> {
    cfg.validate()?;
    check_pattern(pattern, difficulties)?;
    let (lo, hi) = (cfg.search_lo, cfg.search_hi);
    let objective = |theta: f64| neg_loglik(theta, pattern, difficulties, lo, hi);
    let raw = nelder_mead_1d(objective, 0.0, 1.0, cfg.nm_tol, cfg.nm_max_iter);
    let theta_hat = raw.clamp(lo, hi);
    Ok(AbilityEstimate {
        theta_hat,
        epoch: 0,
        n_responses_used: pattern.len(),
        bump_offset: 0.0,
        threshold: theta_hat,
    })
}

/// Apply the stagnation rule to a fresh estimate.
///
/// An epoch "fails" when its estimate does not strictly exceed the best
/// estimate seen before it. Every two consecutive failing epochs ending at
/// the current one add +0.1 to the selection threshold; any improvement
/// resets the offset to zero.
pub fn maybe_bump(mut current: AbilityEstimate, history: &[AbilityEstimate]) -> AbilityEstimate {
    let thetas: Vec<f64> = history.iter().map(|e| e.theta_hat).collect();
    let mut fails = 0usize;
    let mut pos = thetas.len(); // `current` sits just past the history
    while pos > 0 {
        let theta = if pos == thetas.len() { current.theta_hat } else { thetas[pos] };
        let best_before = thetas[..pos].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if theta > best_before {
            break;
        }
        fails += 1;
        pos -= 1;
    }
    current.bump_offset = 0.1 * (fails / 2) as f64;
    current.threshold = current.theta_hat + current.bump_offset;
    current
}
