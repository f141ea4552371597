//! Empirical CDF, value-at-risk and CVaR of a reward batch.
//!
//! Rewards are payoffs: the risk lives in the *lower* tail. The empirical VaR
//! at level `alpha` is the `⌈αN⌉`-th smallest reward, and the empirical CVaR
//! averages exactly those `⌈αN⌉` smallest rewards (ties at the threshold are
//! taken in stable sorted order).

use crate::error::{Error, Result};

/// A non-empty batch of finite rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBatch(Vec<f64>);

impl RewardBatch {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward batch"));
        }
        Ok(Self(rewards))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn cdf(&self, z: f64) -> f64 {
        empirical_cdf(&self.0, z)
    }

    pub fn value_at_risk(&self, alpha: f64) -> Result<f64> {
        empirical_var(&self.0, alpha)
    }

    pub fn cvar(&self, alpha: f64) -> Result<f64> {
        empirical_cvar(&self.0, alpha)
    }
}

impl TryFrom<Vec<f64>> for RewardBatch {
    type Error = Error;

    fn try_from(rewards: Vec<f64>) -> Result<Self> {
        Self::new(rewards)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `αN`, snapped to the nearest integer when it is within rounding error of
/// one (so that e.g. `0.3 * 10` counts as exactly 3).
pub(crate) fn tail_mass_target(alpha: f64, n: usize) -> f64 {
    let t = alpha * n as f64;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.max(1.0) {
        r
    } else {
        t
    }
}

/// Number of samples in the empirical α-tail: `⌈αN⌉`, clamped to `[1, N]`.
pub fn tail_count(alpha: f64, n: usize) -> usize {
    (tail_mass_target(alpha, n).ceil() as usize).clamp(1, n.max(1))
}

/// Fraction of rewards `<= z`.
pub fn empirical_cdf(rewards: &[f64], z: f64) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    rewards.iter().filter(|&&r| r <= z).count() as f64 / rewards.len() as f64
}

/// The empirical lower tail of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSelection {
    /// Empirical VaR: the reward of the last selected sample.
    pub var: f64,
    /// Indices of the selected samples, ascending by reward (stable).
    pub indices: Vec<usize>,
}

impl TailSelection {
    /// Membership mask over the original batch order.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }
}

/// Indices `0..n` sorted ascending by reward; equal rewards keep index order.
pub(crate) fn sorted_order(rewards: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
    order
}

/// Selects the `⌈αN⌉` smallest rewards with the stable tie rule.
pub fn select_tail(rewards: &[f64], alpha: f64) -> Result<TailSelection> {
    check_alpha(alpha)?;
    if rewards.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward batch"));
    }
    let mut order = sorted_order(rewards);
    order.truncate(tail_count(alpha, rewards.len()));
    let var = rewards[*order.last().expect("tail is non-empty")];
    Ok(TailSelection {
        var,
        indices: order,
    })
}

/// The `⌈αN⌉`-th smallest reward.
pub fn empirical_var(rewards: &[f64], alpha: f64) -> Result<f64> {
    select_tail(rewards, alpha).map(|t| t.var)
}

/// Mean of the `⌈αN⌉` smallest rewards.
pub fn empirical_cvar(rewards: &[f64], alpha: f64) -> Result<f64> {
    let tail = select_tail(rewards, alpha)?;
    let sum: f64 = tail.indices.iter().map(|&i| rewards[i]).sum();
    Ok(sum / tail.indices.len() as f64)
}
