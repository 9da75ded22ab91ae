//! Stochastic variational inference for the hierarchical Rasch model.
//!
//! Generative model, all on one logit scale:
//!
//! ```text
//! m_theta, m_b    ~ Normal(0, 1e6)          (vague hyper-means)
//! u_theta, u_b    ~ Gamma(1, 1)             (precisions)
//! theta_j         ~ Normal(m_theta, 1/u_theta)
//! b_i             ~ Normal(m_b, 1/u_b)
//! z_ji            ~ Bernoulli(sigmoid(theta_j - b_i))
//! ```
//!
//! The variational family is fully factorized: a Gaussian `(mu, log_sigma)`
//! per ability, per difficulty, and per hyper-mean, and a log-normal factor
//! per precision. Gradients flow through reparameterized samples
//! (`x = mu + sigma * eps`); entropies are analytic. The ELBO is ascended
//! with Adam, optionally estimating the likelihood term from a mini-batch of
//! items (rescaled by the total item count), with prior and entropy terms
//! always exact.
//!
//! Fitting is single-threaded and draws noise in a fixed order, so a seed
//! pins the whole trajectory bit-for-bit.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::curriculum::{DifficultySource, DifficultyTable};
use crate::error::{Error, Result};
use crate::io;
use crate::irt::{log_sigmoid, sigmoid, ItemDifficulty, ItemId, ResponseMatrix, SubjectAbility, SubjectId};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchicalPriorConfig {
    /// Mean of the Gaussian prior on both hyper-means.
    pub mean_prior_mean: f64,
    /// Variance of that prior; large = vague.
    pub mean_prior_var: f64,
    /// Shape of the Gamma prior on both precisions.
    pub precision_shape: f64,
    /// Rate of the Gamma prior on both precisions.
    pub precision_rate: f64,
}

impl Default for HierarchicalPriorConfig {
    fn default() -> Self {
        Self {
            mean_prior_mean: 0.0,
            mean_prior_var: 1e6,
            precision_shape: 1.0,
            precision_rate: 1.0,
        }
    }
}

impl HierarchicalPriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mean_prior_mean.is_finite() {
            return Err(Error::InvalidInput("prior mean must be finite".into()));
        }
        for (name, v) in [
            ("mean_prior_var", self.mean_prior_var),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Monte Carlo samples per gradient step.
    pub mc_samples: usize,
    /// Items per likelihood mini-batch; `null` means full batch.
    pub batch_items: Option<usize>,
    pub seed: u64,
    /// Relative improvement of the smoothed ELBO below which a step counts
    /// as stalled.
    pub tol_elbo_rel: f64,
    /// Consecutive stalled steps before stopping early.
    pub patience: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            learning_rate: 0.1,
            mc_samples: 1,
            batch_items: None,
            seed: 0,
            tol_elbo_rel: 1e-5,
            patience: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("fit.max_steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("fit.learning_rate must be positive".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidInput("fit.mc_samples must be >= 1".into()));
        }
        if self.batch_items == Some(0) {
            return Err(Error::InvalidInput("fit.batch_items must be >= 1 when set".into()));
        }
        if self.tol_elbo_rel.is_nan() || self.tol_elbo_rel < 0.0 {
            return Err(Error::InvalidInput("fit.tol_elbo_rel must be >= 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidInput("fit.patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean-field Gaussian factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFactor {
    pub mu: f64,
    pub log_sigma: f64,
}

impl GaussianFactor {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

/// Log-normal factor over a positive precision: `ln u ~ Normal(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFactor {
    pub mu: f64,
    pub log_sigma: f64,
}

impl LogNormalFactor {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Posterior mean of the precision itself.
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma() * self.sigma()).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperPosterior {
    pub m_theta: GaussianFactor,
    pub m_b: GaussianFactor,
    pub u_theta: LogNormalFactor,
    pub u_b: LogNormalFactor,
}

/// Fitted variational posterior over all model parameters, plus the ELBO
/// trajectory that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    subjects: Vec<SubjectId>,
    items: Vec<ItemId>,
    subject_factors: Vec<GaussianFactor>,
    item_factors: Vec<GaussianFactor>,
    pub hyper: HyperPosterior,
    pub elbo_trace: Vec<f64>,
}

impl VariationalPosterior {
    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn subjects(&self) -> &[SubjectId] {
        &self.subjects
    }

    pub fn item_factor(&self, item: &ItemId) -> Option<&GaussianFactor> {
        self.items.iter().position(|i| i == item).map(|k| &self.item_factors[k])
    }

    pub fn subject_factor(&self, subject: &SubjectId) -> Option<&GaussianFactor> {
        self.subjects.iter().position(|s| s == subject).map(|k| &self.subject_factors[k])
    }

    pub fn item_factors(&self) -> impl Iterator<Item = (&ItemId, &GaussianFactor)> {
        self.items.iter().zip(&self.item_factors)
    }

    pub fn subject_factors(&self) -> impl Iterator<Item = (&SubjectId, &GaussianFactor)> {
        self.subjects.iter().zip(&self.subject_factors)
    }

    /// Posterior-mean difficulties as parameter records.
    pub fn difficulties(&self) -> Vec<ItemDifficulty> {
        self.item_factors()
            .map(|(item, f)| ItemDifficulty { item: item.clone(), b: f.mu })
            .collect()
    }

    /// Posterior-mean abilities as parameter records.
    pub fn abilities(&self) -> Vec<SubjectAbility> {
        self.subject_factors()
            .map(|(subject, f)| SubjectAbility { subject: subject.clone(), theta: f.mu })
            .collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        io::write_json(path, &PosteriorJson::from(self))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let json: PosteriorJson = io::read_json(path)?;
        json.try_into_posterior(path)
    }
}

/// Posterior-mean difficulty table for curriculum use.
pub fn extract_difficulties(posterior: &VariationalPosterior) -> Result<DifficultyTable> {
    if posterior.items.is_empty() {
        return Err(Error::InvalidInput("posterior contains no items".into()));
    }
    DifficultyTable::from_pairs(
        posterior.item_factors().map(|(item, f)| (item.clone(), f.mu)),
        DifficultySource::IrtAc,
    )
}

#[derive(Serialize, Deserialize)]
struct FactorJson {
    mu: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct ItemJson {
    item_id: ItemId,
    b_mu: f64,
    b_sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct SubjectJson {
    subject_id: SubjectId,
    theta_mu: f64,
    theta_sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct HyperJson {
    m_theta: FactorJson,
    m_b: FactorJson,
    // log-scale parameters of the log-normal precision factors
    u_theta: FactorJson,
    u_b: FactorJson,
}

#[derive(Serialize, Deserialize)]
struct PosteriorJson {
    items: Vec<ItemJson>,
    subjects: Vec<SubjectJson>,
    hyper: HyperJson,
    elbo: Vec<f64>,
}

impl From<&VariationalPosterior> for PosteriorJson {
    fn from(p: &VariationalPosterior) -> Self {
        let factor = |f: &GaussianFactor| FactorJson { mu: f.mu, sigma: f.sigma() };
        PosteriorJson {
            items: p
                .item_factors()
                .map(|(item, f)| ItemJson {
                    item_id: item.clone(),
                    b_mu: f.mu,
                    b_sigma: f.sigma(),
                })
                .collect(),
            subjects: p
                .subject_factors()
                .map(|(subject, f)| SubjectJson {
                    subject_id: subject.clone(),
                    theta_mu: f.mu,
                    theta_sigma: f.sigma(),
                })
                .collect(),
            hyper: HyperJson {
                m_theta: factor(&p.hyper.m_theta),
                m_b: factor(&p.hyper.m_b),
                u_theta: FactorJson { mu: p.hyper.u_theta.mu, sigma: p.hyper.u_theta.sigma() },
                u_b: FactorJson { mu: p.hyper.u_b.mu, sigma: p.hyper.u_b.sigma() },
            },
            elbo: p.elbo_trace.clone(),
        }
    }
}

impl PosteriorJson {
    fn try_into_posterior(self, path: &Path) -> Result<VariationalPosterior> {
        let gauss = |mu: f64, sigma: f64| -> Result<GaussianFactor> {
            if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("bad factor (mu={mu}, sigma={sigma})"),
                });
            }
            Ok(GaussianFactor { mu, log_sigma: sigma.ln() })
        };
        let mut subjects = Vec::new();
        let mut subject_factors = Vec::new();
        for s in self.subjects {
            subjects.push(s.subject_id);
            subject_factors.push(gauss(s.theta_mu, s.theta_sigma)?);
        }
        let mut items = Vec::new();
        let mut item_factors = Vec::new();
        for i in self.items {
            items.push(i.item_id);
            item_factors.push(gauss(i.b_mu, i.b_sigma)?);
        }
        let lognorm = |f: &FactorJson| -> Result<LogNormalFactor> {
            let g = gauss(f.mu, f.sigma)?;
            Ok(LogNormalFactor { mu: g.mu, log_sigma: g.log_sigma })
        };
        Ok(VariationalPosterior {
            subjects,
            items,
            subject_factors,
            item_factors,
            hyper: HyperPosterior {
                m_theta: gauss(self.hyper.m_theta.mu, self.hyper.m_theta.sigma)?,
                m_b: gauss(self.hyper.m_b.mu, self.hyper.m_b.sigma)?,
                u_theta: lognorm(&self.hyper.u_theta)?,
                u_b: lognorm(&self.hyper.u_b)?,
            },
            elbo_trace: self.elbo,
        })
    }
}

/// Flat parameter vector layout: item factors, subject factors, then the
/// eight hyper parameters.
#[derive(Clone, Copy)]
struct Layout {
    i_n: usize,
    j_n: usize,
}

impl Layout {
    fn len(self) -> usize {
        2 * self.i_n + 2 * self.j_n + 8
    }
    fn mu_b(self, i: usize) -> usize {
        i
    }
    fn rho_b(self, i: usize) -> usize {
        self.i_n + i
    }
    fn mu_t(self, j: usize) -> usize {
        2 * self.i_n + j
    }
    fn rho_t(self, j: usize) -> usize {
        2 * self.i_n + self.j_n + j
    }
    /// Base of [mu_mt, rho_mt, mu_mb, rho_mb, mu_ut, rho_ut, mu_ub, rho_ub].
    fn hyper(self) -> usize {
        2 * self.i_n + 2 * self.j_n
    }
}

/// One set of standard-normal noise draws for the reparameterization.
struct EpsDraws {
    b: Vec<f64>,
    t: Vec<f64>,
    mt: f64,
    mb: f64,
    ut: f64,
    ub: f64,
}

impl EpsDraws {
    fn sample(rng: &mut ChaCha8Rng, i_n: usize, j_n: usize) -> Self {
        let mut draw = || StandardNormal.sample(rng);
        Self {
            b: (0..i_n).map(|_| draw()).collect(),
            t: (0..j_n).map(|_| draw()).collect(),
            mt: draw(),
            mb: draw(),
            ut: draw(),
            ub: draw(),
        }
    }
}

/// Lanczos approximation of `ln Gamma(x)`, accurate to ~1e-13 for the
/// hyper-prior normalizer.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.9999999999998099,
        676.5203681218851,
        -1259.1392167224028,
        771.3234287776531,
        -176.6150291621406,
        12.507343278686905,
        -0.13857109526572012,
        9.984369578019572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        PI.ln() - (PI * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Single-sample ELBO estimate and its gradient with respect to the
/// variational parameters, for fixed noise draws.
///
/// The Bernoulli likelihood is evaluated on `batch` items only and rescaled
/// by `weight` (= total items / batch items); priors and entropies are exact
/// over everything. Gradients are *added* into `grad`.
#[allow(clippy::too_many_arguments)]
fn elbo_and_grad(
    params: &[f64],
    grad: &mut [f64],
    layout: Layout,
    by_item: &[Vec<(u32, u8)>],
    batch: &[u32],
    weight: f64,
    priors: &HierarchicalPriorConfig,
    eps: &EpsDraws,
) -> f64 {
    let h = layout.hyper();

    // reparameterized samples
    let sigma_mt = params[h + 1].exp();
    let m_t = params[h] + sigma_mt * eps.mt;
    let sigma_mb = params[h + 3].exp();
    let m_b = params[h + 2] + sigma_mb * eps.mb;
    let sigma_ut = params[h + 5].exp();
    let y_ut = params[h + 4] + sigma_ut * eps.ut;
    let u_t = y_ut.exp();
    let sigma_ub = params[h + 7].exp();
    let y_ub = params[h + 6] + sigma_ub * eps.ub;
    let u_b = y_ub.exp();

    let b: Vec<f64> = (0..layout.i_n)
        .map(|i| params[layout.mu_b(i)] + params[layout.rho_b(i)].exp() * eps.b[i])
        .collect();
    let t: Vec<f64> = (0..layout.j_n)
        .map(|j| params[layout.mu_t(j)] + params[layout.rho_t(j)].exp() * eps.t[j])
        .collect();

    // gradients in sample space
    let mut g_b = vec![0.0; layout.i_n];
    let mut g_t = vec![0.0; layout.j_n];
    let (mut g_mt, mut g_mb, mut g_ut, mut g_ub) = (0.0, 0.0, 0.0, 0.0);

    // Bernoulli likelihood over the batch
    let mut ll = 0.0;
    for &i in batch {
        let i = i as usize;
        for &(j, z) in &by_item[i] {
            let j = j as usize;
            let x = t[j] - b[i];
            let d = f64::from(z) - sigmoid(x);
            g_t[j] += weight * d;
            g_b[i] -= weight * d;
            ll += weight * if z == 1 { log_sigmoid(x) } else { log_sigmoid(-x) };
        }
    }

    // Gaussian priors on abilities and difficulties (exact)
    let mut lp = 0.0;
    let ln_ut = y_ut; // ln of a log-normal sample is its underlying draw
    for j in 0..layout.j_n {
        let d = t[j] - m_t;
        lp += 0.5 * ln_ut - 0.5 * LN_2PI - 0.5 * u_t * d * d;
        g_t[j] -= u_t * d;
        g_mt += u_t * d;
        g_ut += 0.5 / u_t - 0.5 * d * d;
    }
    let ln_ub = y_ub;
    for i in 0..layout.i_n {
        let d = b[i] - m_b;
        lp += 0.5 * ln_ub - 0.5 * LN_2PI - 0.5 * u_b * d * d;
        g_b[i] -= u_b * d;
        g_mb += u_b * d;
        g_ub += 0.5 / u_b - 0.5 * d * d;
    }

    // hyper priors
    let v0 = priors.mean_prior_var;
    let mu0 = priors.mean_prior_mean;
    for (m, g) in [(m_t, &mut g_mt), (m_b, &mut g_mb)] {
        lp += -0.5 * (LN_2PI + v0.ln()) - (m - mu0) * (m - mu0) / (2.0 * v0);
        *g += -(m - mu0) / v0;
    }
    let (a, r) = (priors.precision_shape, priors.precision_rate);
    let gamma_norm = a * r.ln() - ln_gamma(a);
    for (u, g) in [(u_t, &mut g_ut), (u_b, &mut g_ub)] {
        lp += gamma_norm + (a - 1.0) * u.ln() - r * u;
        *g += (a - 1.0) / u - r;
    }

    // analytic entropies
    let gauss_h = 0.5 * (1.0 + LN_2PI);
    let mut entropy = 0.0;
    for i in 0..layout.i_n {
        entropy += gauss_h + params[layout.rho_b(i)];
    }
    for j in 0..layout.j_n {
        entropy += gauss_h + params[layout.rho_t(j)];
    }
    entropy += gauss_h + params[h + 1] + gauss_h + params[h + 3];
    // log-normal entropy: mu + gauss_h + rho
    entropy += params[h + 4] + gauss_h + params[h + 5];
    entropy += params[h + 6] + gauss_h + params[h + 7];

    // chain rule back to variational parameters; entropy contributes +1 to
    // every rho and to each log-normal mu
    for i in 0..layout.i_n {
        let sigma = params[layout.rho_b(i)].exp();
        grad[layout.mu_b(i)] += g_b[i];
        grad[layout.rho_b(i)] += g_b[i] * sigma * eps.b[i] + 1.0;
    }
    for j in 0..layout.j_n {
        let sigma = params[layout.rho_t(j)].exp();
        grad[layout.mu_t(j)] += g_t[j];
        grad[layout.rho_t(j)] += g_t[j] * sigma * eps.t[j] + 1.0;
    }
    grad[h] += g_mt;
    grad[h + 1] += g_mt * sigma_mt * eps.mt + 1.0;
    grad[h + 2] += g_mb;
    grad[h + 3] += g_mb * sigma_mb * eps.mb + 1.0;
    grad[h + 4] += g_ut * u_t + 1.0;
    grad[h + 5] += g_ut * u_t * sigma_ut * eps.ut + 1.0;
    grad[h + 6] += g_ub * u_b + 1.0;
    grad[h + 7] += g_ub * u_b * sigma_ub * eps.ub + 1.0;

    ll + lp + entropy
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    /// One ascent step along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] += self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Fit the hierarchical Rasch model to a response matrix.
///
/// Errors on an empty matrix, invalid configuration, or a diverging fit
/// (non-finite ELBO). Every subject and item in a [`ResponseMatrix`] has at
/// least one response by construction.
pub fn fit_vi(
    matrix: &ResponseMatrix,
    priors: &HierarchicalPriorConfig,
    cfg: &FitConfig,
) -> Result<VariationalPosterior> {
    priors.validate()?;
    cfg.validate()?;
    if matrix.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty response matrix".into()));
    }
    let i_n = matrix.n_items();
    let j_n = matrix.n_subjects();
    let layout = Layout { i_n, j_n };

    let mut by_item: Vec<Vec<(u32, u8)>> = vec![Vec::new(); i_n];
    for &(s, i, z) in matrix.triplets() {
        by_item[i as usize].push((s, z));
    }

    let batch_size = cfg.batch_items.unwrap_or(i_n).min(i_n);
    let full_batch = batch_size == i_n;
    let weight = i_n as f64 / batch_size as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = vec![0.0; layout.len()];
    let mut grad = vec![0.0; layout.len()];
    let mut adam = Adam::new(layout.len(), cfg.learning_rate);

    let all_items: Vec<u32> = (0..i_n as u32).collect();
    let mut order = all_items.clone();
    let mut cursor = i_n; // forces a shuffle before the first mini-batch
    let mut batch_buf = Vec::with_capacity(batch_size);

    let window = 20.min(cfg.max_steps);
    let mut elbo_trace: Vec<f64> = Vec::with_capacity(cfg.max_steps);
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut stalled = 0usize;

    for step in 0..cfg.max_steps {
        let batch: &[u32] = if full_batch {
            &all_items
        } else {
            if cursor + batch_size > i_n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_buf.clear();
            batch_buf.extend_from_slice(&order[cursor..cursor + batch_size]);
            cursor += batch_size;
            &batch_buf
        };

        grad.fill(0.0);
        let mut elbo = 0.0;
        for _ in 0..cfg.mc_samples {
            let eps = EpsDraws::sample(&mut rng, i_n, j_n);
            elbo += elbo_and_grad(&params, &mut grad, layout, &by_item, batch, weight, priors, &eps);
        }
        let s = cfg.mc_samples as f64;
        elbo /= s;
        if !elbo.is_finite() {
            return Err(Error::Diverged { step });
        }
        if cfg.mc_samples > 1 {
            for g in grad.iter_mut() {
                *g /= s;
            }
        }
        adam.step(&mut params, &grad);
        elbo_trace.push(elbo);

        if elbo_trace.len() >= window {
            let smoothed =
                elbo_trace[elbo_trace.len() - window..].iter().sum::<f64>() / window as f64;
            let improved = if best_smoothed == f64::NEG_INFINITY {
                true
            } else {
                smoothed > best_smoothed + cfg.tol_elbo_rel * best_smoothed.abs().max(1.0)
            };
            if improved {
                best_smoothed = smoothed;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= cfg.patience {
                    log::debug!("ELBO stalled for {} steps, stopping at step {}", stalled, step);
                    break;
                }
            }
        }
    }
    log::info!(
        "fit {} items x {} subjects: {} steps, final ELBO {:.1}",
        i_n,
        j_n,
        elbo_trace.len(),
        elbo_trace.last().copied().unwrap_or(f64::NAN)
    );

    let h = layout.hyper();
    Ok(VariationalPosterior {
        subjects: matrix.subjects().to_vec(),
        items: matrix.items().to_vec(),
        subject_factors: (0..j_n)
            .map(|j| GaussianFactor {
                mu: params[layout.mu_t(j)],
                log_sigma: params[layout.rho_t(j)],
            })
            .collect(),
        item_factors: (0..i_n)
            .map(|i| GaussianFactor {
                mu: params[layout.mu_b(i)],
                log_sigma: params[layout.rho_b(i)],
            })
            .collect(),
        hyper: HyperPosterior {
            m_theta: GaussianFactor { mu: params[h], log_sigma: params[h + 1] },
            m_b: GaussianFactor { mu: params[h + 2], log_sigma: params[h + 3] },
            u_theta: LogNormalFactor { mu: params[h + 4], log_sigma: params[h + 5] },
            u_b: LogNormalFactor { mu: params[h + 6], log_sigma: params[h + 7] },
        },
        elbo_trace,
    })
}

/// Generate a synthetic response matrix from known abilities and
/// difficulties, fully crossed. Used by examples, tests, and benchmarks.
pub fn generate_responses(
    thetas: &[f64],
    bs: &[f64],
    seed: u64,
) -> Result<ResponseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = ResponseMatrix::new();
    let width = bs.len().to_string().len().max(4);
    let swidth = thetas.len().to_string().len().max(4);
    for (j, &theta) in thetas.iter().enumerate() {
        let subject = SubjectId::new(format!("s{j:0swidth$}"))?;
        for (i, &b) in bs.iter().enumerate() {
            let item = ItemId::new(format!("q{i:0width$}"))?;
            let p = sigmoid(theta - b);
            let z = u8::from(rng.random::<f64>() < p);
            matrix.push(subject.clone(), item, z)?;
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;
    use rand::Rng;

    fn small_layout() -> (Layout, Vec<Vec<(u32, u8)>>) {
        // 3 items, 2 subjects, 5 responses
        let by_item = vec![
            vec![(0, 1), (1, 1)],
            vec![(0, 0)],
            vec![(0, 1), (1, 0)],
        ];
        (Layout { i_n: 3, j_n: 2 }, by_item)
    }

    fn fixed_eps() -> EpsDraws {
        EpsDraws {
            b: vec![0.3, -0.7, 1.1],
            t: vec![-0.4, 0.9],
            mt: 0.2,
            mb: -1.3,
            ut: 0.5,
            ub: -0.8,
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-12);
        assert!(ln_gamma(2.0).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-10);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-10);
    }

    /// The analytic gradient is checked coordinate-by-coordinate against
    /// central finite differences of the estimator with frozen noise.
    #[test]
    fn gradient_matches_finite_differences() {
        let (layout, by_item) = small_layout();
        let priors = HierarchicalPriorConfig {
            mean_prior_var: 4.0, // tighter than default so its gradient is visible
            precision_shape: 1.5,
            precision_rate: 0.8,
            mean_prior_mean: 0.3,
        };
        let eps = fixed_eps();
        // a non-symmetric starting point
        let mut params: Vec<f64> = (0..layout.len())
            .map(|k| 0.07 * (k as f64) - 0.4 + 0.03 * ((k * k) % 5) as f64)
            .collect();
        for (batch, weight) in [(vec![0u32, 1, 2], 1.0), (vec![0u32, 2], 1.5)] {
            let mut analytic = vec![0.0; layout.len()];
            elbo_and_grad(&params, &mut analytic, layout, &by_item, &batch, weight, &priors, &eps);
            let h = 1e-6;
            for k in 0..layout.len() {
                let orig = params[k];
                params[k] = orig + h;
                let up = elbo_and_grad(
                    &params,
                    &mut vec![0.0; layout.len()],
                    layout,
                    &by_item,
                    &batch,
                    weight,
                    &priors,
                    &eps,
                );
                params[k] = orig - h;
                let down = elbo_and_grad(
                    &params,
                    &mut vec![0.0; layout.len()],
                    layout,
                    &by_item,
                    &batch,
                    weight,
                    &priors,
                    &eps,
                );
                params[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (analytic[k] - numeric).abs() <= 1e-5 + 1e-5 * numeric.abs(),
                    "param {k}: analytic {} vs numeric {numeric} (weight {weight})",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn fit_orders_easy_and_hard_items() {
        // q0 answered correctly by everyone, q1 by no one
        let mut m = ResponseMatrix::new();
        for j in 0..12 {
            let s = SubjectId::new(format!("s{j}")).unwrap();
            m.push(s.clone(), ItemId::new("q0").unwrap(), 1).unwrap();
            m.push(s, ItemId::new("q1").unwrap(), 0).unwrap();
        }
        let post = fit_vi(&m, &Default::default(), &FitConfig { max_steps: 800, ..Default::default() })
            .unwrap();
        let b0 = post.item_factor(&ItemId::new("q0").unwrap()).unwrap().mu;
        let b1 = post.item_factor(&ItemId::new("q1").unwrap()).unwrap().mu;
        assert!(b0 < b1 - 0.5, "easy item should fit well below hard item: {b0} vs {b1}");
    }

    #[test]
    fn fit_recovers_parameters_on_midsize_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let thetas: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let bs: Vec<f64> = (0..300).map(|_| rng.random_range(-2.5..2.5)).collect();
        let m = generate_responses(&thetas, &bs, 7).unwrap();
        let post = fit_vi(&m, &Default::default(), &Default::default()).unwrap();
        let fitted_b: Vec<f64> = post.item_factors.iter().map(|f| f.mu).collect();
        let r_b = pearson(&fitted_b, &bs);
        assert!(r_b > 0.9, "difficulty recovery r = {r_b}");
        let fitted_t: Vec<f64> = post.subject_factors.iter().map(|f| f.mu).collect();
        let r_t = pearson(&fitted_t, &thetas);
        assert!(r_t > 0.85, "ability recovery r = {r_t}");
    }

    #[test]
    fn location_is_anchored_by_priors_not_by_the_truth() {
        // shift all true parameters by +2: the data distribution is
        // unchanged (only theta - b matters), so the fit must land in the
        // same prior-anchored location and still correlate with the truth
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let thetas: Vec<f64> = (0..25).map(|_| rng.random_range(-1.5..1.5) + 2.0).collect();
        let bs: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0) + 2.0).collect();
        let m = generate_responses(&thetas, &bs, 11).unwrap();
        let post = fit_vi(&m, &Default::default(), &Default::default()).unwrap();
        let fitted_b: Vec<f64> = post.item_factors.iter().map(|f| f.mu).collect();
        assert!(pearson(&fitted_b, &bs) > 0.9);
        let mean_b = crate::stats::mean(&fitted_b);
        assert!(
            mean_b < 1.0,
            "fitted location should not follow the +2 shift, got mean {mean_b}"
        );
    }

    #[test]
    fn same_seed_reproduces_the_fit_exactly() {
        let m = generate_responses(&[-0.5, 0.8, 1.2], &[0.0, -1.0, 0.7, 1.5], 5).unwrap();
        let cfg = FitConfig { max_steps: 150, ..Default::default() };
        let a = fit_vi(&m, &Default::default(), &cfg).unwrap();
        let b = fit_vi(&m, &Default::default(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = fit_vi(&m, &Default::default(), &FitConfig { seed: 99, ..cfg }).unwrap();
        assert_ne!(a.elbo_trace, c.elbo_trace);
    }

    #[test]
    fn smoothed_elbo_trends_upward() {
        let m = generate_responses(
            &[-1.0, -0.3, 0.4, 1.1, 1.9],
            &(0..60).map(|i| -2.0 + i as f64 * 4.0 / 59.0).collect::<Vec<_>>(),
            13,
        )
        .unwrap();
        let cfg = FitConfig { max_steps: 600, mc_samples: 4, ..Default::default() };
        let post = fit_vi(&m, &Default::default(), &cfg).unwrap();
        let trace = &post.elbo_trace;
        assert!(trace.len() >= 100);
        // disjoint 20-step window means, each allowed 1% slack for MC noise
        let means: Vec<f64> = trace
            .chunks(20)
            .filter(|c| c.len() == 20)
            .map(|c| c.iter().sum::<f64>() / 20.0)
            .collect();
        for w in means.windows(2) {
            assert!(
                w[1] >= w[0] - 0.01 * w[0].abs(),
                "smoothed ELBO regressed: {} then {}",
                w[0],
                w[1]
            );
        }
        assert!(*means.last().unwrap() > means[0]);
    }

    #[test]
    fn loose_tolerance_stops_early() {
        let m = generate_responses(&[0.0, 0.5], &[-1.0, 0.0, 1.0], 1).unwrap();
        let cfg = FitConfig {
            max_steps: 2000,
            tol_elbo_rel: 0.5,
            patience: 30,
            ..Default::default()
        };
        let post = fit_vi(&m, &Default::default(), &cfg).unwrap();
        // improvements can't exceed 50% of |ELBO| for long, so the stall
        // counter fires well before max_steps
        assert!(post.elbo_trace.len() < 200, "{} steps", post.elbo_trace.len());
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let m = generate_responses(&[0.0, 1.0], &[-1.0, 1.0], 2).unwrap();
        let cfg = FitConfig { learning_rate: 1e8, max_steps: 50, ..Default::default() };
        match fit_vi(&m, &Default::default(), &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mini_batch_fit_still_recovers_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let thetas: Vec<f64> = (0..20).map(|_| rng.random_range(-1.5..1.5)).collect();
        let bs: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = generate_responses(&thetas, &bs, 23).unwrap();
        let cfg = FitConfig { batch_items: Some(25), max_steps: 1500, ..Default::default() };
        let post = fit_vi(&m, &Default::default(), &cfg).unwrap();
        let fitted: Vec<f64> = post.item_factors.iter().map(|f| f.mu).collect();
        assert!(pearson(&fitted, &bs) > 0.85, "r = {}", pearson(&fitted, &bs));
    }

    #[test]
    fn empty_matrix_and_bad_config_are_rejected() {
        let m = ResponseMatrix::new();
        assert!(fit_vi(&m, &Default::default(), &Default::default()).is_err());
        let m = generate_responses(&[0.0], &[0.0], 0).unwrap();
        let bad = FitConfig { learning_rate: -1.0, ..Default::default() };
        assert!(fit_vi(&m, &Default::default(), &bad).is_err());
        let bad_prior = HierarchicalPriorConfig { mean_prior_var: 0.0, ..Default::default() };
        assert!(fit_vi(&m, &bad_prior, &Default::default()).is_err());
    }

    #[test]
    fn posterior_json_round_trip() {
        let m = generate_responses(&[0.2, -0.9], &[0.5, -0.5, 1.5], 4).unwrap();
        let cfg = FitConfig { max_steps: 60, ..Default::default() };
        let post = fit_vi(&m, &Default::default(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posterior.json");
        post.save_json(&path).unwrap();
        let back = VariationalPosterior::load_json(&path).unwrap();
        assert_eq!(back.items(), post.items());
        assert_eq!(back.subjects(), post.subjects());
        assert_eq!(back.elbo_trace, post.elbo_trace);
        for (a, b) in post.item_factors.iter().zip(&back.item_factors) {
            assert!((a.mu - b.mu).abs() < 1e-12);
            assert!((a.log_sigma - b.log_sigma).abs() < 1e-12);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["\"items\"", "\"subjects\"", "\"hyper\"", "\"elbo\"", "\"b_mu\"", "\"b_sigma\""] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn extract_difficulties_exposes_posterior_means() {
        let m = generate_responses(&[0.0, 0.7], &[-0.8, 0.3], 9).unwrap();
        let cfg = FitConfig { max_steps: 60, ..Default::default() };
        let post = fit_vi(&m, &Default::default(), &cfg).unwrap();
        let table = extract_difficulties(&post).unwrap();
        assert_eq!(table.source(), DifficultySource::IrtAc);
        assert_eq!(table.len(), 2);
        for (item, f) in post.item_factors() {
            assert_eq!(table.get(item), Some(f.mu));
        }
    }

    #[test]
    fn empty_posterior_cannot_yield_difficulties() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(
            &path,
            r#"{"items":[],"subjects":[],"hyper":{
                "m_theta":{"mu":0.0,"sigma":1.0},"m_b":{"mu":0.0,"sigma":1.0},
                "u_theta":{"mu":0.0,"sigma":1.0},"u_b":{"mu":0.0,"sigma":1.0}},
               "elbo":[]}"#,
        )
        .unwrap();
        let post = VariationalPosterior::load_json(&path).unwrap();
        assert!(extract_difficulties(&post).is_err());
    }
}
