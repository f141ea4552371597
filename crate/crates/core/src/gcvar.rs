//! Likelihood-ratio gradient estimators for CVaR and for the mean.
//!
//! [`gcvar_estimate`] is the VaR-baselined tail estimator
//!
//! ```text
//! Δ_j = 1/(αN) Σ_i score_j(i) · (r_i − ν̂) · 1{i in the empirical α-tail}
//! ```
//!
//! where `ν̂` is the empirical VaR. [`naive_tail_lr_estimate`] drops the
//! `ν̂` baseline and is kept only to demonstrate that it is inconsistent.
//! [`plain_lr_estimate`] is the ordinary mean-reward policy-gradient estimate
//! with the batch average as baseline.
//!
//! Sums run left to right in batch order so results are bit-stable.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{derive_seed, sample_batch, ParamVector, ScoredSample, StochasticModel};
use crate::risk::{check_alpha, select_tail};

/// A gradient estimate with the diagnostics the optimizer logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Baseline used: the empirical VaR for tail estimators, the batch mean
    /// reward for [`plain_lr_estimate`].
    pub var_used: f64,
    /// Number of samples whose indicator is 1.
    pub tail_count: usize,
    pub n: usize,
}

pub(crate) fn check_scores<'a>(scores: impl Iterator<Item = &'a [f64]>) -> Result<usize> {
    let mut k = None;
    for s in scores {
        match k {
            None => k = Some(s.len()),
            Some(k) if k != s.len() => {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: s.len(),
                })
            }
            _ => {}
        }
    }
    k.ok_or(Error::EmptyBatch)
}

/// `Σ_i in tail  score(i) · w_i · (r_i − baseline)`, scaled by `scale`.
///
/// `weights == None` means every weight is exactly 1.
pub(crate) fn tail_weighted_sum(
    samples: &[&ScoredSample],
    weights: Option<&[f64]>,
    mask: &[bool],
    baseline: f64,
    scale: f64,
    k: usize,
) -> Vec<f64> {
    let mut grad = vec![0.0; k];
    for (i, s) in samples.iter().enumerate() {
        if !mask[i] {
            continue;
        }
        let mut factor = s.reward - baseline;
        if let Some(w) = weights {
            factor *= w[i];
        }
        for (g, sc) in grad.iter_mut().zip(&s.score) {
            *g += sc * factor;
        }
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

fn tail_estimate(samples: &[ScoredSample], alpha: f64, subtract_var: bool) -> Result<GradientEstimate> {
    check_alpha(alpha)?;
    let k = check_scores(samples.iter().map(|s| s.score.as_slice()))?;
    let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    let tail = select_tail(&rewards, alpha)?;
    let n = samples.len();
    let refs: Vec<&ScoredSample> = samples.iter().collect();
    let baseline = if subtract_var { tail.var } else { 0.0 };
    let grad = tail_weighted_sum(
        &refs,
        None,
        &tail.mask(n),
        baseline,
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

/// CVaR gradient estimate from i.i.d. samples drawn at the current parameter.
///
/// Returns the zero vector (not an error) when every tail reward equals the
/// empirical VaR.
pub fn gcvar_estimate(samples: &[ScoredSample], alpha: f64) -> Result<GradientEstimate> {
    tail_estimate(samples, alpha, true)
}

/// Tail likelihood-ratio average without the VaR baseline. Biased; for
/// ablation only.
pub fn naive_tail_lr_estimate(samples: &[ScoredSample], alpha: f64) -> Result<GradientEstimate> {
    tail_estimate(samples, alpha, false)
}

/// `1/N Σ_i score(i) · (r_i − r̄)`: the mean-reward gradient estimate with the
/// average-return baseline.
pub fn plain_lr_estimate(samples: &[ScoredSample]) -> Result<GradientEstimate> {
    let k = check_scores(samples.iter().map(|s| s.score.as_slice()))?;
    let n = samples.len();
    let mean = samples.iter().map(|s| s.reward).sum::<f64>() / n as f64;
    let refs: Vec<&ScoredSample> = samples.iter().collect();
    let grad = tail_weighted_sum(&refs, None, &vec![true; n], mean, 1.0 / n as f64, k);
    Ok(GradientEstimate {
        grad,
        var_used: mean,
        tail_count: n,
        n,
    })
}

/// One row of a bias study.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub n: usize,
    /// Mean estimate over the replications.
    pub mean_estimate: Vec<f64>,
    /// `|mean estimate − truth|`, averaged over components.
    pub mean_abs_bias: f64,
}

/// Runs `replications` independent [`gcvar_estimate`] calls for every batch
/// size and reports the distance of their average from `truth`.
pub fn bias_study<M: StochasticModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    truth: &[f64],
    alpha: f64,
    batch_sizes: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<BiasRow>> {
    check_alpha(alpha)?;
    if truth.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: truth.len(),
        });
    }
    if replications == 0 {
        return Err(Error::invalid("bias study", "replications must be at least 1"));
    }
    let mut rows = Vec::with_capacity(batch_sizes.len());
    for (b, &n) in batch_sizes.iter().enumerate() {
        let estimates: Vec<Vec<f64>> = (0..replications as u64)
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(derive_seed(seed, b as u64), r);
                let batch = sample_batch(model, theta, n, s)?;
                Ok(gcvar_estimate(&batch, alpha)?.grad)
            })
            .collect::<Result<_>>()?;
        let mut mean = vec![0.0; truth.len()];
        for e in &estimates {
            for (m, v) in mean.iter_mut().zip(e) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= replications as f64);
        let mean_abs_bias =
            mean.iter().zip(truth).map(|(m, t)| (m - t).abs()).sum::<f64>() / truth.len() as f64;
        rows.push(BiasRow {
            n,
            mean_estimate: mean,
            mean_abs_bias,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(bias)` against `log(N)`. `None` with fewer than
/// two rows or a non-positive bias.
pub fn loglog_slope(rows: &[BiasRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| r.mean_abs_bias <= 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.mean_abs_bias.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstantReward;

    fn sample(reward: f64, score: &[f64]) -> ScoredSample {
        ScoredSample::new(Vec::new(), Vec::new(), reward, score.to_vec()).unwrap()
    }

    #[test]
    fn zero_scores_give_zero_gradient() {
        let b: Vec<_> = (0..10).map(|i| sample(i as f64, &[0.0, 0.0])).collect();
        assert_eq!(gcvar_estimate(&b, 0.3).unwrap().grad, vec![0.0, 0.0]);
        assert_eq!(naive_tail_lr_estimate(&b, 0.3).unwrap().grad, vec![0.0, 0.0]);
    }

    #[test]
    fn baseline_cancels_lone_tail_sample() {
        let b = vec![sample(0.0, &[1.0]), sample(10.0, &[1.0])];
        let e = gcvar_estimate(&b, 0.5).unwrap();
        assert_eq!(e.var_used, 0.0);
        assert_eq!(e.tail_count, 1);
        assert_eq!(e.grad, vec![0.0]);
    }

    #[test]
    fn hand_computed_tail_sum() {
        // α = 0.4, N = 5 → tail {r=1, r=2}, ν̂ = 2, scale 1/2.
        let b = vec![
            sample(5.0, &[9.0]),
            sample(1.0, &[2.0]),
            sample(3.0, &[9.0]),
            sample(2.0, &[4.0]),
            sample(4.0, &[9.0]),
        ];
        let e = gcvar_estimate(&b, 0.4).unwrap();
        assert_eq!(e.grad, vec![0.5 * (2.0 * (1.0 - 2.0))]);
        let naive = naive_tail_lr_estimate(&b, 0.4).unwrap();
        assert_eq!(naive.grad, vec![0.5 * (2.0 * 1.0 + 4.0 * 2.0)]);
    }

    #[test]
    fn naive_zero_rewards_is_zero() {
        let b: Vec<_> = (0..6).map(|i| sample(0.0, &[i as f64])).collect();
        assert_eq!(naive_tail_lr_estimate(&b, 0.5).unwrap().grad, vec![0.0]);
    }

    #[test]
    fn all_tail_at_var_returns_zero() {
        let b: Vec<_> = (0..8).map(|i| sample(1.0, &[i as f64 - 3.0])).collect();
        let e = gcvar_estimate(&b, 0.5).unwrap();
        assert_eq!(e.grad, vec![0.0]);
        assert_eq!(e.tail_count, 4);
    }

    #[test]
    fn plain_equal_rewards_is_zero() {
        let b: Vec<_> = (0..5).map(|i| sample(2.0, &[i as f64])).collect();
        let e = plain_lr_estimate(&b).unwrap();
        assert_eq!(e.grad, vec![0.0]);
        assert_eq!(e.var_used, 2.0);
    }

    #[test]
    fn estimator_errors() {
        assert!(matches!(gcvar_estimate(&[], 0.5), Err(Error::EmptyBatch)));
        assert!(matches!(plain_lr_estimate(&[]), Err(Error::EmptyBatch)));
        let b = vec![sample(0.0, &[1.0]), sample(1.0, &[1.0, 2.0])];
        assert!(matches!(
            gcvar_estimate(&b, 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        let ok = vec![sample(0.0, &[1.0])];
        assert!(matches!(gcvar_estimate(&ok, 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(naive_tail_lr_estimate(&ok, 0.0), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn bias_study_on_constant_model_is_zero() {
        let m = ConstantReward { value: 4.0, dim: 1 };
        let t = ParamVector::scalar(0.0).unwrap();
        let rows = bias_study(&m, &t, &[0.0], 0.5, &[10, 100], 3, 1).unwrap();
        assert!(rows.iter().all(|r| r.mean_abs_bias == 0.0));
        assert_eq!(loglog_slope(&rows), None);
    }

    #[test]
    fn single_replication_single_size() {
        let t = ParamVector::scalar(0.0).unwrap();
        let rows = bias_study(&crate::model::GaussianMean, &t, &[1.0], 0.5, &[50], 1, 2).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(loglog_slope(&rows), None);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<_> = [100usize, 1000, 10000]
            .iter()
            .map(|&n| BiasRow {
                n,
                mean_estimate: vec![],
                mean_abs_bias: 3.0 * (n as f64).powf(-0.5),
            })
            .collect();
        assert!((loglog_slope(&rows).unwrap() + 0.5).abs() < 1e-12);
    }
}
