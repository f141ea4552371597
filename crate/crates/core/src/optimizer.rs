//! Projected stochastic gradient ascent on the CVaR objective.
//!
//! `θ ← Γ(θ + ε_i Δ_i)` where `Δ_i` is a gradient estimate from a fresh
//! batch of `n_i` samples and `Γ` clamps into a box.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcvar::{gcvar_estimate, plain_lr_estimate, GradientEstimate};
use crate::importance::{
    fit_proposal_saa, is_gcvar_estimate, sample_weighted_batch, Proposal, SaaConfig,
};
use crate::model::{derive_seed, sample_batch, ParamVector, StochasticModel};
use crate::risk::{check_alpha, empirical_cvar, select_tail, tail_mass_target};

/// The compact parameter set `Θ = [lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ProjectionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("box", "zero-dimensional"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid("box", format!("need lower < upper, got [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-radius, radius]^k`.
    pub fn symmetric(k: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; k], vec![radius; k])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn project(&self, theta: &ParamVector) -> Result<ParamVector> {
        theta.check_dim(self.dim())?;
        let v = theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| t.clamp(*l, *u))
            .collect();
        ParamVector::new(v)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| l <= t && t <= u)
    }
}

/// Step size `ε_i` for iteration `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `ε_i = scale / i`.
    Harmonic { scale: f64 },
    Constant { step: f64 },
}

impl StepSchedule {
    pub fn step(&self, i: usize) -> f64 {
        match *self {
            StepSchedule::Harmonic { scale } => scale / i as f64,
            StepSchedule::Constant { step } => step,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSchedule::Harmonic { scale } => scale,
            StepSchedule::Constant { step } => step,
        };
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("step schedule", format!("{v} is not a positive step")))
        }
    }
}

/// Batch size `n_i` for iteration `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchSchedule {
    /// `n_i = max(min, ⌈ln(i + 1)⁴⌉)`.
    LogPower { min: usize },
    Fixed { size: usize },
}

impl BatchSchedule {
    /// Log-power schedule with the floor `⌈4/α⌉`.
    pub fn default_for(alpha: f64) -> Self {
        BatchSchedule::LogPower {
            min: (4.0 / alpha).ceil() as usize,
        }
    }

    pub fn batch(&self, i: usize) -> usize {
        match *self {
            BatchSchedule::LogPower { min } => {
                let grow = ((i as f64 + 1.0).ln().powi(4)).ceil() as usize;
                min.max(grow)
            }
            BatchSchedule::Fixed { size } => size,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = match *self {
            BatchSchedule::LogPower { min } => min,
            BatchSchedule::Fixed { size } => size,
        };
        if n == 0 {
            return Err(Error::invalid("batch schedule", "batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Which gradient drives the update.
#[derive(Clone, Copy)]
pub enum Estimator<'p> {
    /// GCVaR on nominal samples.
    Crude,
    /// GCVaR on proposal samples; `ω` is refit on nominal samples every
    /// `refit_period` iterations, starting with iteration 1.
    ImportanceSampling {
        proposal: &'p dyn Proposal,
        refit_period: usize,
        saa: SaaConfig,
    },
    /// The expected-return gradient, for the risk-neutral comparison.
    PlainLr,
}

impl std::fmt::Debug for Estimator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Crude => f.write_str("Crude"),
            Estimator::ImportanceSampling { refit_period, .. } => {
                write!(f, "ImportanceSampling {{ refit_period: {refit_period} }}")
            }
            Estimator::PlainLr => f.write_str("PlainLr"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub alpha: f64,
    pub projection: ProjectionBox,
    pub step: StepSchedule,
    pub batch: BatchSchedule,
    pub iterations: usize,
    pub seed: u64,
    /// Starting point; projected before the first step.
    pub theta0: Vec<f64>,
}

impl SgdConfig {
    /// `ε_i = 1/i`, log-power batches, start at the origin.
    pub fn new(alpha: f64, projection: ProjectionBox, iterations: usize, seed: u64) -> Self {
        let k = projection.dim();
        Self {
            alpha,
            projection,
            step: StepSchedule::Harmonic { scale: 1.0 },
            batch: BatchSchedule::default_for(alpha),
            iterations,
            seed,
            theta0: vec![0.0; k],
        }
    }
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Parameter after the update.
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
    pub step: f64,
    pub batch_size: usize,
    pub var_used: f64,
    pub tail_count: usize,
    /// Mean and α-CVaR of the batch rewards at the pre-update parameter
    /// (likelihood-ratio weighted under importance sampling).
    pub mean_return: f64,
    pub cvar_return: f64,
    pub omega: Option<Vec<f64>>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub iteration: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// The projected starting point.
    pub theta0: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    /// Set when an estimator failed; `records` holds every step before it.
    pub failure: Option<RunFailure>,
}

const REFIT_TAG: u64 = 0x5EED_0F_0E6A;

/// Weighted mean and α-CVaR of a reward batch; `weights` sum to about `n`.
fn batch_summary(rewards: &[f64], weights: Option<&[f64]>, alpha: f64) -> Result<(f64, f64)> {
    let n = rewards.len();
    match weights {
        None => {
            let mean = rewards.iter().sum::<f64>() / n as f64;
            Ok((mean, empirical_cvar(rewards, alpha)?))
        }
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mean = rewards.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / total;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
            let target = tail_mass_target(alpha, n) / n as f64 * total;
            let (mut acc, mut mass) = (0.0, 0.0);
            for i in order {
                let take = w[i].min(target - mass);
                acc += take * rewards[i];
                mass += take;
                if mass >= target {
                    break;
                }
            }
            Ok((mean, acc / mass))
        }
    }
}

/// Runs the optimizer without observing intermediate steps.
pub fn cvarsgd<M: StochasticModel + ?Sized>(
    model: &M,
    estimator: Estimator<'_>,
    config: &SgdConfig,
) -> Result<RunTrace> {
    cvarsgd_with_observer(model, estimator, config, |_| Ok(()))
}

/// Runs the optimizer, calling `observe` after each completed step. An error
/// from the observer aborts the run and is returned.
///
/// Batch `i` is drawn with seed `derive_seed(seed, i)`, so the trace is a
/// pure function of the configuration.
pub fn cvarsgd_with_observer<M, F>(
    model: &M,
    estimator: Estimator<'_>,
    config: &SgdConfig,
    mut observe: F,
) -> Result<RunTrace>
where
    M: StochasticModel + ?Sized,
    F: FnMut(&IterationRecord) -> Result<()>,
{
    check_alpha(config.alpha)?;
    if config.iterations == 0 {
        return Err(Error::invalid("cvarsgd", "iterations must be at least 1"));
    }
    config.step.validate()?;
    config.batch.validate()?;
    let k = model.dim();
    if config.projection.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: config.projection.dim(),
        });
    }
    if let Estimator::ImportanceSampling {
        proposal,
        refit_period,
        ..
    } = estimator
    {
        if proposal.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: proposal.dim(),
            });
        }
        if refit_period == 0 {
            return Err(Error::invalid("cvarsgd", "refit period must be at least 1"));
        }
    }
    let mut theta = config.projection.project(&ParamVector::new(config.theta0.clone())?)?;
    let theta0 = theta.to_vec();
    let mut omega: Option<Vec<f64>> = None;
    let mut records = Vec::with_capacity(config.iterations);
    let start = Instant::now();

    for i in 1..=config.iterations {
        let batch_seed = derive_seed(config.seed, i as u64);
        let n = config.batch.batch(i);
        let step = config.step.step(i);
        let outcome: Result<(GradientEstimate, f64, f64)> = (|| match estimator {
            Estimator::Crude | Estimator::PlainLr => {
                let batch = sample_batch(model, &theta, n, batch_seed)?;
                let est = match estimator {
                    Estimator::Crude => gcvar_estimate(&batch, config.alpha)?,
                    _ => plain_lr_estimate(&batch)?,
                };
                let rewards: Vec<f64> = batch.iter().map(|s| s.reward).collect();
                let (mean, cvar) = batch_summary(&rewards, None, config.alpha)?;
                Ok((est, mean, cvar))
            }
            Estimator::ImportanceSampling {
                proposal,
                refit_period,
                saa,
            } => {
                if omega.is_none() || (i - 1) % refit_period == 0 {
                    let fit = fit_proposal_saa(
                        model,
                        proposal,
                        &theta,
                        config.alpha,
                        &saa,
                        derive_seed(config.seed ^ REFIT_TAG, i as u64),
                    )?;
                    omega = Some(fit.omega);
                }
                let w = omega.as_deref().expect("omega set above");
                let batch = sample_weighted_batch(proposal, &theta, w, n, batch_seed)?;
                let est = is_gcvar_estimate(&batch, config.alpha)?;
                let rewards: Vec<f64> = batch.iter().map(|s| s.inner.reward).collect();
                let weights: Vec<f64> = batch.iter().map(|s| s.likelihood_ratio).collect();
                let (mean, cvar) = batch_summary(&rewards, Some(&weights), config.alpha)?;
                Ok((est, mean, cvar))
            }
        })();
        let (est, mean, cvar) = match outcome {
            Ok(v) => v,
            Err(e) => {
                return Ok(RunTrace {
                    theta0,
                    final_theta: theta.into_vec(),
                    records,
                    failure: Some(RunFailure {
                        iteration: i,
                        message: e.to_string(),
                    }),
                })
            }
        };
        let moved: Vec<f64> = theta.iter().zip(&est.grad).map(|(t, g)| t + step * g).collect();
        theta = config.projection.project(&ParamVector::new(moved)?)?;
        let record = IterationRecord {
            iteration: i,
            theta: theta.to_vec(),
            grad: est.grad,
            step,
            batch_size: n,
            var_used: est.var_used,
            tail_count: est.tail_count,
            mean_return: mean,
            cvar_return: cvar,
            omega: omega.clone(),
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        observe(&record)?;
        records.push(record);
    }
    Ok(RunTrace {
        theta0,
        final_theta: theta.into_vec(),
        records,
        failure: None,
    })
}

/// Fixed-width histogram over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("histogram", "need bins >= 1 and lo < hi"));
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(Self { lo, hi, counts })
    }

    /// Range taken from the data, widened by 0.5 when all values coincide.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::EmptyBatch);
        }
        if lo == hi {
            Self::with_range(values, lo - 0.5, hi + 0.5, bins)
        } else {
            Self::with_range(values, lo, hi, bins)
        }
    }

    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + b as f64 * width, self.lo + (b + 1) as f64 * width)
    }
}

pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub mean: f64,
    pub cvar: f64,
    pub var: f64,
    pub histogram: Histogram,
    pub rewards: Vec<f64>,
}

/// Monte-Carlo evaluation on `n_eval` independent samples.
pub fn evaluate_policy<M: StochasticModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    alpha: f64,
    n_eval: usize,
    seed: u64,
) -> Result<PolicyEvaluation> {
    check_alpha(alpha)?;
    let min = (1.0 / alpha).ceil() as usize;
    if n_eval < min {
        return Err(Error::invalid("evaluation", format!("n_eval {n_eval} below ⌈1/α⌉ = {min}")));
    }
    let batch = sample_batch(model, theta, n_eval, seed)?;
    let rewards: Vec<f64> = batch.into_iter().map(|s| s.reward).collect();
    let tail = select_tail(&rewards, alpha)?;
    let (mean, cvar) = batch_summary(&rewards, None, alpha)?;
    Ok(PolicyEvaluation {
        mean,
        cvar,
        var: tail.var,
        histogram: Histogram::from_values(&rewards, HISTOGRAM_BINS)?,
        rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::GaussianShiftProposal;
    use crate::model::{ConstantReward, GaussianMean};

    fn p(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn projection_clamps() {
        let b = ProjectionBox::symmetric(2, 1.0).unwrap();
        assert_eq!(b.project(&p(&[2.0, -3.0])).unwrap().as_slice(), &[1.0, -1.0]);
        assert_eq!(b.project(&p(&[0.25, -0.5])).unwrap().as_slice(), &[0.25, -0.5]);
        assert!(b.project(&p(&[0.0])).is_err());
        assert!(ProjectionBox::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn default_schedules() {
        let b = BatchSchedule::default_for(0.05);
        assert_eq!(b.batch(1), 80);
        // ln(2001)^4 ≈ 3338.68
        assert_eq!(b.batch(2000), 3339);
        let s = StepSchedule::Harmonic { scale: 1.0 };
        assert_eq!(s.step(4), 0.25);
    }

    #[test]
    fn harmonic_partial_sums() {
        let s = StepSchedule::Harmonic { scale: 1.0 };
        let (mut sum, mut sq) = (0.0, 0.0);
        let mut at_1e3 = (0.0, 0.0);
        for i in 1..=1_000_000 {
            let e = s.step(i);
            sum += e;
            sq += e * e;
            if i == 1000 {
                at_1e3 = (sum, sq);
            }
        }
        // Σε grows like ln n; Σε² is already within 1e-3 of π²/6.
        assert!(sum - at_1e3.0 > 6.0);
        assert!(sq - at_1e3.1 < 1e-3);
        assert!((sq - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-5);
    }

    #[test]
    fn constant_model_never_moves() {
        let m = ConstantReward { value: 3.0, dim: 2 };
        let mut cfg = SgdConfig::new(0.1, ProjectionBox::symmetric(2, 5.0).unwrap(), 20, 1);
        cfg.theta0 = vec![0.5, -0.5];
        let t = cvarsgd(&m, Estimator::Crude, &cfg).unwrap();
        assert_eq!(t.final_theta, vec![0.5, -0.5]);
        assert!(t.records.iter().all(|r| r.theta == vec![0.5, -0.5]));
    }

    #[test]
    fn one_iteration_one_record() {
        let cfg = SgdConfig::new(0.5, ProjectionBox::symmetric(1, 1.0).unwrap(), 1, 3);
        let t = cvarsgd(&GaussianMean, Estimator::Crude, &cfg).unwrap();
        assert_eq!(t.records.len(), 1);
        let mut zero = cfg.clone();
        zero.iterations = 0;
        assert!(cvarsgd(&GaussianMean, Estimator::Crude, &zero).is_err());
    }

    #[test]
    fn deterministic_and_feasible() {
        let mut cfg = SgdConfig::new(0.2, ProjectionBox::symmetric(1, 1.0).unwrap(), 50, 9);
        cfg.theta0 = vec![7.0];
        let a = cvarsgd(&GaussianMean, Estimator::Crude, &cfg).unwrap();
        let b = cvarsgd(&GaussianMean, Estimator::Crude, &cfg).unwrap();
        assert_eq!(a.theta0, vec![1.0]);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.theta, y.theta);
            assert_eq!(x.grad, y.grad);
            assert!(cfg.projection.contains(&x.theta));
        }
    }

    #[test]
    fn gaussian_ascent_reaches_the_boundary() {
        let mut cfg = SgdConfig::new(0.5, ProjectionBox::symmetric(1, 1.0).unwrap(), 300, 4);
        cfg.theta0 = vec![-1.0];
        let t = cvarsgd(&GaussianMean, Estimator::Crude, &cfg).unwrap();
        assert!(t.final_theta[0] > 0.9, "{:?}", t.final_theta);
        let before = evaluate_policy(&GaussianMean, &p(&t.theta0), 0.5, 20_000, 1).unwrap();
        let after = evaluate_policy(&GaussianMean, &p(&t.final_theta), 0.5, 20_000, 1).unwrap();
        assert!(after.cvar > before.cvar);
    }

    #[test]
    fn importance_sampling_run_refits() {
        let mut cfg = SgdConfig::new(0.05, ProjectionBox::symmetric(1, 1.0).unwrap(), 12, 2);
        cfg.batch = BatchSchedule::Fixed { size: 200 };
        let est = Estimator::ImportanceSampling {
            proposal: &GaussianShiftProposal,
            refit_period: 5,
            saa: SaaConfig {
                n_saa: 2000,
                gd_steps: 20,
                gd_rate: 1.0,
            },
        };
        let t = cvarsgd(&GaussianMean, est, &cfg).unwrap();
        assert!(t.failure.is_none());
        let omegas: Vec<f64> = t.records.iter().map(|r| r.omega.as_ref().unwrap()[0]).collect();
        assert!(omegas[0] < 0.0);
        assert_eq!(omegas[0], omegas[4]);
        assert_ne!(omegas[4], omegas[5]);
    }

    #[test]
    fn evaluation_of_constant_and_gaussian() {
        let e = evaluate_policy(&ConstantReward { value: 2.5, dim: 1 }, &p(&[0.0]), 0.1, 100, 0).unwrap();
        assert_eq!((e.mean, e.cvar), (2.5, 2.5));
        assert_eq!(e.histogram.counts.iter().sum::<u64>(), 100);
        assert!(evaluate_policy(&GaussianMean, &p(&[0.0]), 0.1, 5, 0).is_err());
        let g = evaluate_policy(&GaussianMean, &p(&[0.0]), 0.05, 1_000_000, 11).unwrap();
        assert!((g.cvar + 2.062712807507318).abs() < 0.02, "{}", g.cvar);
        assert!(g.cvar <= g.mean);
    }

    #[test]
    fn weighted_summary_matches_unweighted_for_unit_weights() {
        let r = [3.0, -1.0, 2.0, 0.5, 4.0, -2.0, 1.0, 0.0, 2.5, 1.5];
        let w = [1.0; 10];
        let a = batch_summary(&r, None, 0.3).unwrap();
        let b = batch_summary(&r, Some(&w), 0.3).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }
}
