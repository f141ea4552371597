//! Parameterized stochastic models: sampling plus score-function evaluation.
//!
//! A model draws one realization of its outcome at a parameter `theta`
//! together with the score `∂θ log f` evaluated at that realization. All
//! randomness enters through an explicit generator argument, so a model value
//! is immutable and can be shared across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Seeded generator used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// The controllable parameter vector. Non-empty, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector", "length must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_dim(&self, k: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: self.0.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One realization of a model.
///
/// `y` is the discrete part of the outcome (for an MDP the interleaved
/// state/action sequence), `x` the continuous part, and `score` the value of
/// `∂θ log f_Y(y) + ∂θ log f_{X|Y}(x|y)` at this realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub y: Vec<u32>,
    pub x: Vec<f64>,
    pub reward: f64,
    pub score: Vec<f64>,
}

impl ScoredSample {
    pub fn new(y: Vec<u32>, x: Vec<f64>, reward: f64, score: Vec<f64>) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("sample reward"));
        }
        if score.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("sample score"));
        }
        Ok(Self { y, x, reward, score })
    }
}

/// A distribution over outcomes parameterized by a k-vector.
pub trait StochasticModel: Send + Sync {
    /// Parameter dimension k.
    fn dim(&self) -> usize;

    /// Draws one sample at `theta`. The returned score is the exact gradient
    /// of the model's log-density at the drawn outcome.
    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample>;

    /// Optional bound `b` with `|reward| <= b` almost surely.
    fn reward_bound(&self) -> Option<f64> {
        None
    }
}

impl<M: StochasticModel + ?Sized> StochasticModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample> {
        (**self).sample(theta, rng)
    }

    fn reward_bound(&self) -> Option<f64> {
        (**self).reward_bound()
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` i.i.d. samples, sample `i` from substream `i` of `seed`.
///
/// Sampling may run in parallel; the result order is the index order, so the
/// batch is identical regardless of thread count.
pub fn sample_batch<M: StochasticModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    n: usize,
    seed: u64,
) -> Result<Vec<ScoredSample>> {
    theta.check_dim(model.dim())?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            model.sample(theta, &mut rng)
        })
        .collect()
}

/// Monte-Carlo mean of the score over `n` draws. Should be near zero for any
/// correct model, since `E[∂θ log f] = 0`.
pub fn score_identity_check<M: StochasticModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch = sample_batch(model, theta, n, seed)?;
    let mut mean = vec![0.0; model.dim()];
    for s in &batch {
        for (m, g) in mean.iter_mut().zip(&s.score) {
            *m += g;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Ok(mean)
}

/// `Z ~ Normal(θ, 1)` with reward `Z`; the score is `Z − θ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianMean;

impl GaussianMean {
    pub fn log_density(theta: f64, z: f64) -> f64 {
        -0.5 * (z - theta).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

impl StochasticModel for GaussianMean {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample> {
        theta.check_dim(1)?;
        let eps: f64 = rng.sample(StandardNormal);
        let z = theta[0] + eps;
        Ok(ScoredSample {
            y: Vec::new(),
            x: vec![z],
            reward: z,
            score: vec![eps],
        })
    }
}

/// Single-step softmax choice among `m` categories.
///
/// Category `j` is drawn with probability `exp(φ_j·θ) / Σ_a exp(φ_a·θ)` and
/// pays `rewards[j]`, optionally plus `Uniform[−η, η]` smoothing noise. The
/// noise does not depend on `θ`, so the score is `φ_j − Σ_a p_a φ_a`.
#[derive(Debug, Clone)]
pub struct CategoricalSoftmax {
    features: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    smoothing: f64,
}

impl CategoricalSoftmax {
    pub fn new(features: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::invalid("categorical model", "need at least 2 categories"));
        }
        if rewards.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: rewards.len(),
            });
        }
        let k = features[0].len();
        if k == 0 {
            return Err(Error::invalid("categorical model", "feature rows must be non-empty"));
        }
        for row in &features {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("categorical features"));
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("categorical rewards"));
        }
        Ok(Self {
            features,
            rewards,
            smoothing: 0.0,
        })
    }

    /// Half-width `η` of the uniform reward noise (0 disables it).
    pub fn with_smoothing(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid("smoothing", format!("{eta}")));
        }
        self.smoothing = eta;
        Ok(self)
    }

    pub fn categories(&self) -> usize {
        self.features.len()
    }

    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        softmax(self.features.iter().map(|row| dot(row, theta)))
    }

    pub fn log_prob(&self, theta: &[f64], category: usize) -> f64 {
        let prefs: Vec<f64> = self.features.iter().map(|row| dot(row, theta)).collect();
        prefs[category] - log_sum_exp(&prefs)
    }

    pub fn score(&self, theta: &[f64], category: usize) -> Vec<f64> {
        let p = self.probabilities(theta);
        let mut score = self.features[category].clone();
        for (pa, row) in p.iter().zip(&self.features) {
            for (s, f) in score.iter_mut().zip(row) {
                *s -= pa * f;
            }
        }
        score
    }
}

impl StochasticModel for CategoricalSoftmax {
    fn dim(&self) -> usize {
        self.features[0].len()
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample> {
        theta.check_dim(self.dim())?;
        let p = self.probabilities(theta);
        let j = sample_index(&p, rng.random::<f64>());
        let mut x = Vec::new();
        let mut reward = self.rewards[j];
        if self.smoothing > 0.0 {
            let noise = self.smoothing * (2.0 * rng.random::<f64>() - 1.0);
            x.push(noise);
            reward += noise;
        }
        Ok(ScoredSample {
            y: vec![j as u32],
            x,
            reward,
            score: self.score(theta, j),
        })
    }

    fn reward_bound(&self) -> Option<f64> {
        let m = self.rewards.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        Some(m + self.smoothing)
    }
}

/// Rewards a constant regardless of `θ`; every score is zero.
#[derive(Debug, Clone, Copy)]
pub struct ConstantReward {
    pub value: f64,
    pub dim: usize,
}

impl StochasticModel for ConstantReward {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, theta: &ParamVector, _rng: &mut dyn RngCore) -> Result<ScoredSample> {
        theta.check_dim(self.dim)?;
        Ok(ScoredSample {
            y: Vec::new(),
            x: Vec::new(),
            reward: self.value,
            score: vec![0.0; self.dim],
        })
    }

    fn reward_bound(&self) -> Option<f64> {
        Some(self.value.abs())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(prefs: impl Iterator<Item = f64>) -> Vec<f64> {
    let prefs: Vec<f64> = prefs.collect();
    let max = prefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = prefs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Inverse-CDF draw from a probability vector given `u ~ Uniform[0, 1)`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // category with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn param_vector_rejects_bad_input() {
        assert!(ParamVector::new(vec![]).is_err());
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
        assert!(ParamVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn gaussian_score_is_centered_draw() {
        let mut rng = substream(3, 0);
        for t in [0.0, 2.0, -1.5] {
            let s = GaussianMean.sample(&theta(&[t]), &mut rng).unwrap();
            assert!((s.score[0] - (s.reward - t)).abs() < 1e-12);
            assert_eq!(s.x[0], s.reward);
        }
    }

    #[test]
    fn gaussian_score_matches_finite_difference() {
        let h = 1e-5;
        for (t, z) in [(0.0, 0.5), (2.0, 2.0), (-1.0, 0.3)] {
            let fd = (GaussianMean::log_density(t + h, z) - GaussianMean::log_density(t - h, z))
                / (2.0 * h);
            let exact = z - t;
            assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-6) + 1e-9);
        }
    }

    #[test]
    fn categorical_uniform_at_zero() {
        let m = CategoricalSoftmax::new(vec![vec![1.0], vec![0.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(m.probabilities(&[0.0]), vec![0.5, 0.5]);
        assert_eq!(m.score(&[0.0], 0), vec![0.5]);
        assert_eq!(m.score(&[0.0], 1), vec![-0.5]);
    }

    #[test]
    fn categorical_score_matches_finite_difference() {
        let feats = vec![vec![1.0, -0.3], vec![0.2, 0.7], vec![-0.5, 0.1]];
        let m = CategoricalSoftmax::new(feats, vec![0.0, 1.0, 2.0]).unwrap();
        let t = [0.4, -1.2];
        let h = 1e-5;
        for cat in 0..3 {
            let score = m.score(&t, cat);
            for j in 0..2 {
                let mut plus = t;
                let mut minus = t;
                plus[j] += h;
                minus[j] -= h;
                let fd = (m.log_prob(&plus, cat) - m.log_prob(&minus, cat)) / (2.0 * h);
                assert!((fd - score[j]).abs() <= 1e-6, "cat {cat} comp {j}");
            }
        }
    }

    #[test]
    fn categorical_rejects_non_finite_features() {
        assert!(CategoricalSoftmax::new(vec![vec![f64::NAN], vec![0.0]], vec![0.0, 1.0]).is_err());
        assert!(CategoricalSoftmax::new(vec![vec![1.0]], vec![0.0]).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let t = theta(&[0.7]);
        let a = sample_batch(&GaussianMean, &t, 100, 11).unwrap();
        let b = sample_batch(&GaussianMean, &t, 100, 11).unwrap();
        let c = sample_batch(&GaussianMean, &t, 100, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn score_identity_single_draw_is_the_draw() {
        let t = theta(&[0.0]);
        let mean = score_identity_check(&GaussianMean, &t, 1, 5).unwrap();
        let batch = sample_batch(&GaussianMean, &t, 1, 5).unwrap();
        assert_eq!(mean, batch[0].score);
    }

    #[test]
    fn score_identity_gaussian_and_categorical() {
        let n = 1_000_000;
        let bound = 4.0 / (n as f64).sqrt();
        let g = score_identity_check(&GaussianMean, &theta(&[1.0]), n, 1).unwrap();
        assert!(g[0].abs() <= bound, "{g:?}");
        let m = CategoricalSoftmax::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let c = score_identity_check(&m, &theta(&[0.3, -0.8]), n, 2).unwrap();
        // Score components are bounded by 1 here, so 4/√n is a loose 4σ bound.
        assert!(c.iter().all(|v| v.abs() <= bound), "{c:?}");
    }

    #[test]
    fn constant_model_scores_vanish() {
        let m = ConstantReward { value: 3.0, dim: 2 };
        let b = sample_batch(&m, &theta(&[0.0, 1.0]), 4, 0).unwrap();
        assert!(b.iter().all(|s| s.reward == 3.0 && s.score == vec![0.0, 0.0]));
    }
}
