//! Importance-sampled CVaR gradients.
//!
//! Samples come from a proposal `g(·; θ, ω)` and carry the likelihood ratio
//! `f/g`. The VaR is read off the weighted empirical CDF
//! `F̂_IS(z) = 1/N Σ_i (f/g)_i 1{r_i <= z}` and the tail estimator reweights
//! each term by its ratio. The proposal parameter `ω` is fitted by sample
//! average approximation: minimize `1/N Σ_i ‖H(x_i)‖² f/g(x_i; ω)` over
//! nominal samples `x_i ~ f`, with `H_j = score_j (r − ν̂) 1{r <= ν̂} / α`.

use rand::RngCore;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcvar::{check_scores, gcvar_estimate, tail_weighted_sum, GradientEstimate};
use crate::model::{
    derive_seed, sample_batch, substream, ParamVector, ScoredSample, StochasticModel,
};
use crate::risk::{check_alpha, select_tail, sorted_order, tail_mass_target};

/// A sample drawn from a proposal, with its likelihood ratio `f/g`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScoredSample {
    pub inner: ScoredSample,
    pub likelihood_ratio: f64,
}

impl WeightedScoredSample {
    /// Builds a sample from `log(f/g)`, exponentiating once.
    pub fn from_log_ratio(inner: ScoredSample, log_ratio: f64) -> Result<Self> {
        let likelihood_ratio = log_ratio.exp();
        if !(likelihood_ratio.is_finite() && likelihood_ratio > 0.0) {
            return Err(Error::NonFinite("likelihood ratio"));
        }
        Ok(Self {
            inner,
            likelihood_ratio,
        })
    }
}

/// A family of sampling distributions `g(·; θ, ω)` for a nominal model.
pub trait Proposal: Send + Sync {
    /// Dimension k of `θ`.
    fn dim(&self) -> usize;

    fn omega_dim(&self) -> usize;

    /// The `ω₀` for which `g = f`, i.e. every likelihood ratio is 1.
    fn identity_omega(&self) -> Vec<f64>;

    fn sample(
        &self,
        theta: &ParamVector,
        omega: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<WeightedScoredSample>;

    /// `log f − log g` at an arbitrary outcome (typically a nominal draw).
    fn log_ratio(&self, theta: &ParamVector, omega: &[f64], sample: &ScoredSample) -> Result<f64>;

    /// `∂ω log g` at an outcome.
    fn grad_log_proposal(
        &self,
        theta: &ParamVector,
        omega: &[f64],
        sample: &ScoredSample,
    ) -> Result<Vec<f64>>;
}

pub(crate) fn check_omega(p: &(impl Proposal + ?Sized), omega: &[f64]) -> Result<()> {
    if omega.len() != p.omega_dim() {
        return Err(Error::DimensionMismatch {
            expected: p.omega_dim(),
            found: omega.len(),
        });
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("proposal parameter"));
    }
    Ok(())
}

/// Draws `n` proposal samples, sample `i` from substream `i` of `seed`.
pub fn sample_weighted_batch<P: Proposal + ?Sized>(
    proposal: &P,
    theta: &ParamVector,
    omega: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<WeightedScoredSample>> {
    theta.check_dim(proposal.dim())?;
    check_omega(proposal, omega)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            proposal.sample(theta, omega, &mut rng)
        })
        .collect()
}

struct WeightedTail {
    var: f64,
    indices: Vec<usize>,
}

fn weighted_tail(samples: &[WeightedScoredSample], alpha: f64) -> Result<WeightedTail> {
    check_alpha(alpha)?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = samples.len();
    let rewards: Vec<f64> = samples.iter().map(|s| s.inner.reward).collect();
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward batch"));
    }
    // L(i) = 1/N Σ_{j<=i} lr_j >= α  ⇔  Σ_{j<=i} lr_j >= αN.
    let target = tail_mass_target(alpha, n);
    let order = sorted_order(&rewards);
    let mut cum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        cum += samples[i].likelihood_ratio;
        if cum >= target {
            let mut indices = order;
            indices.truncate(pos + 1);
            return Ok(WeightedTail {
                var: rewards[i],
                indices,
            });
        }
    }
    Err(Error::QuantileUndefined {
        mass: cum / n as f64,
        alpha,
    })
}

/// Weighted empirical VaR: the reward at the first sorted position where the
/// normalized cumulative likelihood ratio reaches `alpha`.
pub fn is_empirical_var(samples: &[WeightedScoredSample], alpha: f64) -> Result<f64> {
    weighted_tail(samples, alpha).map(|t| t.var)
}

/// Importance-sampled CVaR gradient. With every ratio equal to 1 this is
/// bit-for-bit [`gcvar_estimate`].
pub fn is_gcvar_estimate(samples: &[WeightedScoredSample], alpha: f64) -> Result<GradientEstimate> {
    let tail = weighted_tail(samples, alpha)?;
    let k = check_scores(samples.iter().map(|s| s.inner.score.as_slice()))?;
    let n = samples.len();
    let refs: Vec<&ScoredSample> = samples.iter().map(|s| &s.inner).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.likelihood_ratio).collect();
    let mut mask = vec![false; n];
    for &i in &tail.indices {
        mask[i] = true;
    }
    let grad = tail_weighted_sum(
        &refs,
        Some(&weights),
        &mask,
        tail.var,
        1.0 / (alpha * n as f64),
        k,
    );
    Ok(GradientEstimate {
        grad,
        var_used: tail.var,
        tail_count: tail.indices.len(),
        n,
    })
}

/// Fixed SAA problem: nominal samples and their squared tail contributions.
pub struct SaaProblem<'a, P: Proposal + ?Sized> {
    proposal: &'a P,
    theta: ParamVector,
    samples: Vec<ScoredSample>,
    /// `Σ_j H_j²` per sample; zero outside the crude tail.
    weights: Vec<f64>,
}

impl<'a, P: Proposal + ?Sized> SaaProblem<'a, P> {
    /// `samples` must be nominal draws at `theta`. The crude empirical VaR of
    /// the batch defines `H`.
    pub fn new(
        proposal: &'a P,
        theta: &ParamVector,
        alpha: f64,
        samples: Vec<ScoredSample>,
    ) -> Result<Self> {
        theta.check_dim(proposal.dim())?;
        check_scores(samples.iter().map(|s| s.score.as_slice()))?;
        let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
        let tail = select_tail(&rewards, alpha)?;
        let mask = tail.mask(samples.len());
        let weights = samples
            .iter()
            .zip(&mask)
            .map(|(s, &inside)| {
                if !inside {
                    return 0.0;
                }
                let d = (s.reward - tail.var) / alpha;
                s.score.iter().map(|g| (g * d).powi(2)).sum()
            })
            .collect();
        Ok(Self {
            proposal,
            theta: theta.clone(),
            samples,
            weights,
        })
    }

    /// SAA objective at `omega`. Samples with zero weight are skipped, so a
    /// proposal only needs positive density on the tail.
    pub fn objective(&self, omega: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (s, &w) in self.samples.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let lr = self.proposal.log_ratio(&self.theta, omega, s)?.exp();
            total += w * lr;
        }
        Ok(total / self.samples.len() as f64)
    }

    /// Gradient via `∂ω (f/g) = −(f/g) ∂ω log g`.
    pub fn gradient(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; omega.len()];
        for (s, &w) in self.samples.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let lr = self.proposal.log_ratio(&self.theta, omega, s)?.exp();
            let dlog = self.proposal.grad_log_proposal(&self.theta, omega, s)?;
            for (g, d) in grad.iter_mut().zip(dlog) {
                *g -= w * lr * d;
            }
        }
        let n = self.samples.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok(grad)
    }

    /// Backtracking gradient descent from the identity parameter.
    ///
    /// Each step starts at `rate` and halves (at most 30 times) until the
    /// objective strictly decreases; descent stops when no halving succeeds.
    pub fn solve(&self, steps: usize, rate: f64) -> Result<SaaFit> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid("SAA step size", format!("{rate}")));
        }
        let mut omega = self.proposal.identity_omega();
        let initial = self.objective(&omega)?;
        if !initial.is_finite() {
            return Err(Error::NonFinite("SAA objective at the identity proposal"));
        }
        let mut current = initial;
        let mut trace = vec![initial];
        let mut termination = SaaTermination::StepsExhausted;
        'outer: for _ in 0..steps {
            let grad = self.gradient(&omega)?;
            if grad.iter().any(|g| !g.is_finite()) {
                termination = SaaTermination::NonFiniteObjective;
                break;
            }
            if grad.iter().all(|&g| g == 0.0) {
                termination = SaaTermination::Stationary;
                break;
            }
            let mut eta = rate;
            let mut saw_non_finite = false;
            for _ in 0..=30 {
                let trial: Vec<f64> = omega.iter().zip(&grad).map(|(w, g)| w - eta * g).collect();
                let value = self.objective(&trial)?;
                if !value.is_finite() {
                    saw_non_finite = true;
                } else if value < current {
                    omega = trial;
                    current = value;
                    trace.push(value);
                    continue 'outer;
                }
                eta *= 0.5;
            }
            termination = if saw_non_finite {
                SaaTermination::NonFiniteObjective
            } else {
                SaaTermination::Stationary
            };
            break;
        }
        Ok(SaaFit {
            omega,
            initial_objective: initial,
            final_objective: current,
            objective_trace: trace,
            termination,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaaTermination {
    StepsExhausted,
    /// No step size in the backtracking ladder decreased the objective.
    Stationary,
    /// The objective became non-finite; `omega` is the last finite iterate.
    NonFiniteObjective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaFit {
    pub omega: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Objective after every accepted step, starting at the identity value.
    pub objective_trace: Vec<f64>,
    pub termination: SaaTermination,
}

/// SAA settings for fitting the proposal parameter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SaaConfig {
    pub n_saa: usize,
    pub gd_steps: usize,
    pub gd_rate: f64,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self {
            n_saa: 10_000,
            gd_steps: 100,
            gd_rate: 1.0,
        }
    }
}

/// Draws `n_saa` nominal samples at `theta` and fits `ω` on them.
pub fn fit_proposal_saa<M, P>(
    model: &M,
    proposal: &P,
    theta: &ParamVector,
    alpha: f64,
    config: &SaaConfig,
    seed: u64,
) -> Result<SaaFit>
where
    M: StochasticModel + ?Sized,
    P: Proposal + ?Sized,
{
    let samples = sample_batch(model, theta, config.n_saa, seed)?;
    SaaProblem::new(proposal, theta, alpha, samples)?.solve(config.gd_steps, config.gd_rate)
}

/// Per-component variances of the crude and importance-sampled estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComparison {
    pub var_crude: Vec<f64>,
    pub var_is: Vec<f64>,
    pub mean_crude: Vec<f64>,
    pub mean_is: Vec<f64>,
}

impl VarianceComparison {
    pub fn ratios(&self) -> Vec<f64> {
        self.var_is.iter().zip(&self.var_crude).map(|(a, b)| a / b).collect()
    }
}

fn mean_and_variance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; k];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; k];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    var.iter_mut().for_each(|s| *s /= n - 1.0);
    (mean, var)
}

/// Runs both estimators on `replications` independent batches of size `n`.
#[allow(clippy::too_many_arguments)]
pub fn variance_comparison<M, P>(
    model: &M,
    proposal: &P,
    theta: &ParamVector,
    alpha: f64,
    omega: &[f64],
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<VarianceComparison>
where
    M: StochasticModel + ?Sized,
    P: Proposal + ?Sized,
{
    if replications < 2 {
        return Err(Error::invalid("variance comparison", "need at least 2 replications"));
    }
    let crude: Vec<Vec<f64>> = (0..replications as u64)
        .map(|r| {
            let b = sample_batch(model, theta, n, derive_seed(seed, 2 * r))?;
            Ok(gcvar_estimate(&b, alpha)?.grad)
        })
        .collect::<Result<_>>()?;
    let is: Vec<Vec<f64>> = (0..replications as u64)
        .map(|r| {
            let b = sample_weighted_batch(proposal, theta, omega, n, derive_seed(seed, 2 * r + 1))?;
            Ok(is_gcvar_estimate(&b, alpha)?.grad)
        })
        .collect::<Result<_>>()?;
    let (mean_crude, var_crude) = mean_and_variance(&crude);
    let (mean_is, var_is) = mean_and_variance(&is);
    Ok(VarianceComparison {
        var_crude,
        var_is,
        mean_crude,
        mean_is,
    })
}

/// Mean-shift proposal for [`GaussianMean`](crate::model::GaussianMean):
/// `g = Normal(θ + ω, 1)`, identity at `ω = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianShiftProposal;

impl Proposal for GaussianShiftProposal {
    fn dim(&self) -> usize {
        1
    }

    fn omega_dim(&self) -> usize {
        1
    }

    fn identity_omega(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn sample(
        &self,
        theta: &ParamVector,
        omega: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<WeightedScoredSample> {
        use rand::Rng;
        theta.check_dim(1)?;
        check_omega(self, omega)?;
        let eps: f64 = rng.sample(StandardNormal);
        let z = theta[0] + omega[0] + eps;
        let inner = ScoredSample {
            y: Vec::new(),
            x: vec![z],
            reward: z,
            // Equals z − θ; written this way it is exactly the nominal
            // score when ω = 0.
            score: vec![omega[0] + eps],
        };
        let log_ratio = self.log_ratio(theta, omega, &inner)?;
        WeightedScoredSample::from_log_ratio(inner, log_ratio)
    }

    fn log_ratio(&self, theta: &ParamVector, omega: &[f64], sample: &ScoredSample) -> Result<f64> {
        let z = sample.x[0];
        let d = z - theta[0];
        Ok(-0.5 * d * d + 0.5 * (d - omega[0]).powi(2))
    }

    fn grad_log_proposal(
        &self,
        theta: &ParamVector,
        omega: &[f64],
        sample: &ScoredSample,
    ) -> Result<Vec<f64>> {
        Ok(vec![sample.x[0] - theta[0] - omega[0]])
    }
}
