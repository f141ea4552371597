//! Episodic MDPs under a Markov softmax policy.
//!
//! A trajectory `s_0, a_0, ρ_0, …, s_τ` splits into a discrete part
//! (states and actions) and a continuous part (rewards). Only the policy
//! depends on `θ`, so the trajectory score is the sum of per-step policy
//! scores and the transition law never enters the gradient.
//!
//! For importance sampling, the value-tilted kernel reweights every
//! transition row by `exp(−ω Ṽ(s'))` and renormalizes; positive `ω` steers
//! rollouts toward low-value successors. The path likelihood ratio is the
//! product of per-step `f/f̂` and is accumulated in log space.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{check_omega, Proposal, WeightedScoredSample};
use crate::model::{dot, log_sum_exp, sample_index, softmax, ParamVector, ScoredSample, StochasticModel};

/// One point of a discrete reward distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardAtom {
    pub value: f64,
    pub prob: f64,
}

impl RewardAtom {
    pub fn new(value: f64, prob: f64) -> Self {
        Self { value, prob }
    }
}

const ROW_TOL: f64 = 1e-12;

/// A finite episodic MDP with dense transition tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMdp {
    n_states: usize,
    n_actions: usize,
    /// `[s][a][s']`, row-major.
    transitions: Vec<f64>,
    /// Reward law per `(s, a)`.
    rewards: Vec<Vec<RewardAtom>>,
    initial: Vec<f64>,
    terminal: usize,
    max_steps: usize,
    smoothing: f64,
}

fn check_distribution(what: &'static str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::invalid(what, format!("bad probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(what, format!("probabilities sum to {total}")));
    }
    Ok(())
}

impl EpisodicMdp {
    /// `transitions[s][a]` is the successor distribution, `rewards[s][a]`
    /// the per-step reward law. The terminal state must be absorbing.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<RewardAtom>>>,
        initial: Vec<f64>,
        terminal: usize,
        max_steps: usize,
    ) -> Result<Self> {
        let n_states = transitions.len();
        if n_states == 0 {
            return Err(Error::invalid("mdp", "no states"));
        }
        let n_actions = transitions[0].len();
        if n_actions == 0 {
            return Err(Error::invalid("mdp", "no actions"));
        }
        if terminal >= n_states {
            return Err(Error::invalid("mdp", "terminal state out of range"));
        }
        if max_steps == 0 {
            return Err(Error::invalid("mdp", "step cap must be at least 1"));
        }
        if initial.len() != n_states || rewards.len() != n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states,
                found: initial.len().min(rewards.len()),
            });
        }
        check_distribution("initial distribution", initial.iter().copied())?;
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_rewards = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, rew)) in transitions.into_iter().zip(rewards).enumerate() {
            if rows.len() != n_actions || rew.len() != n_actions {
                return Err(Error::invalid("mdp", format!("state {s} has the wrong action count")));
            }
            for (a, (row, atoms)) in rows.into_iter().zip(rew).enumerate() {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch {
                        expected: n_states,
                        found: row.len(),
                    });
                }
                check_distribution("transition row", row.iter().copied())?;
                if s == terminal && row[terminal] != 1.0 {
                    return Err(Error::invalid("mdp", "terminal state must be absorbing"));
                }
                if atoms.is_empty() || atoms.iter().any(|r| !r.value.is_finite()) {
                    return Err(Error::invalid("mdp", format!("bad reward law at ({s}, {a})")));
                }
                check_distribution("reward law", atoms.iter().map(|r| r.prob))?;
                flat.extend(row);
                flat_rewards.push(atoms);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions: flat,
            rewards: flat_rewards,
            initial,
            terminal,
            max_steps,
            smoothing: 0.0,
        })
    }

    /// Half-width `η` of the uniform noise added once to the episode return.
    pub fn with_smoothing(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::invalid("smoothing", format!("{eta}")));
        }
        self.smoothing = eta;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward_law(&self, s: usize, a: usize) -> &[RewardAtom] {
        &self.rewards[s * self.n_actions + a]
    }
}

/// Features `φ(s, a) ∈ R^k` for every state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    n_states: usize,
    n_actions: usize,
    k: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    /// `rows[s][a]` is `φ(s, a)`.
    pub fn new(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let k = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 || k == 0 {
            return Err(Error::invalid("feature table", "empty"));
        }
        let mut values = Vec::with_capacity(n_states * n_actions * k);
        for per_state in rows {
            if per_state.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    expected: n_actions,
                    found: per_state.len(),
                });
            }
            for phi in per_state {
                if phi.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: phi.len(),
                    });
                }
                if phi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("features"));
                }
                values.extend(phi);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            k,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.k;
        &self.values[start..start + self.k]
    }

    fn check_mdp(&self, mdp: &EpisodicMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::invalid(
                "feature table",
                format!(
                    "shape {}x{} does not match mdp {}x{}",
                    self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
                ),
            ));
        }
        Ok(())
    }
}

/// Markov softmax policy `π(a|s) ∝ exp(φ(s,a)·θ)`.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxPolicy<'a> {
    pub features: &'a FeatureTable,
    pub theta: &'a [f64],
}

impl<'a> SoftmaxPolicy<'a> {
    pub fn new(features: &'a FeatureTable, theta: &'a [f64]) -> Result<Self> {
        if theta.len() != features.k {
            return Err(Error::DimensionMismatch {
                expected: features.k,
                found: theta.len(),
            });
        }
        Ok(Self { features, theta })
    }

    pub fn preference(&self, s: usize, a: usize) -> f64 {
        dot(self.features.phi(s, a), self.theta)
    }

    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        softmax((0..self.features.n_actions).map(|a| self.preference(s, a)))
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        let prefs: Vec<f64> = (0..self.features.n_actions).map(|b| self.preference(s, b)).collect();
        prefs[a] - log_sum_exp(&prefs)
    }

    /// `∂θ log π(a|s) = φ(s,a) − Σ_b π(b|s) φ(s,b)`.
    pub fn grad_log_prob(&self, s: usize, a: usize) -> Vec<f64> {
        let probs = self.action_probs(s);
        let mut g = self.features.phi(s, a).to_vec();
        for (b, p) in probs.iter().enumerate() {
            for (gi, f) in g.iter_mut().zip(self.features.phi(s, b)) {
                *gi -= p * f;
            }
        }
        g
    }
}

/// `Ṽ(s) = max_a φ(s,a)·θ`.
pub fn softmax_value_heuristic(policy: &SoftmaxPolicy<'_>, s: usize) -> f64 {
    (0..policy.features.n_actions)
        .map(|a| policy.preference(s, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Transition law used for a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Kernel<'a> {
    Nominal,
    /// `f̂(s'|s,a) ∝ f(s'|s,a) exp(−ω values[s'])`.
    Tilted { omega: f64, values: &'a [f64] },
}

/// The value-tilted version of one transition row.
pub fn tilted_row(row: &[f64], values: &[f64], omega: f64) -> Vec<f64> {
    // Exact identity at ω = 0, so the untilted proposal replays nominal draws.
    if omega == 0.0 {
        return row.to_vec();
    }
    let logits: Vec<f64> = row
        .iter()
        .zip(values)
        .map(|(&p, &v)| if p > 0.0 { p.ln() - omega * v } else { f64::NEG_INFINITY })
        .collect();
    let norm = log_sum_exp(&logits);
    logits.iter().map(|l| (l - norm).exp()).collect()
}

/// One simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Smoothing noise added to the return (0 when smoothing is off).
    pub noise: f64,
    pub total_reward: f64,
    pub score: Vec<f64>,
    /// `Σ_t log f(s_{t+1}|s_t,a_t) − log f̂(s_{t+1}|s_t,a_t)`; 0 under the
    /// nominal kernel.
    pub log_lr: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Interleaved `s_0, a_0, s_1, …, s_τ` as used for [`ScoredSample::y`].
    pub fn encode_path(&self) -> Vec<u32> {
        let mut y = Vec::with_capacity(2 * self.actions.len() + 1);
        for (s, a) in self.states.iter().zip(&self.actions) {
            y.push(*s as u32);
            y.push(*a as u32);
        }
        y.push(*self.states.last().expect("trajectory has a start state") as u32);
        y
    }

    pub fn into_sample(self) -> ScoredSample {
        let y = self.encode_path();
        let mut x = self.rewards;
        if self.noise != 0.0 {
            x.push(self.noise);
        }
        ScoredSample {
            y,
            x,
            reward: self.total_reward,
            score: self.score,
        }
    }
}

/// Splits an encoded path into `(s_t, a_t, s_{t+1})` triples.
pub fn decode_path(y: &[u32]) -> Result<Vec<(usize, usize, usize)>> {
    if y.len() % 2 != 1 {
        return Err(Error::invalid("encoded path", "length must be odd"));
    }
    Ok((0..y.len() / 2)
        .map(|t| (y[2 * t] as usize, y[2 * t + 1] as usize, y[2 * t + 2] as usize))
        .collect())
}

fn draw_reward(atoms: &[RewardAtom], u: f64) -> f64 {
    let mut acc = 0.0;
    for r in atoms {
        acc += r.prob;
        if u < acc {
            return r.value;
        }
    }
    atoms.iter().rev().find(|r| r.prob > 0.0).map_or(atoms[0].value, |r| r.value)
}

/// Rolls out one episode. Stops at the terminal state or after `max_steps`
/// actions, whichever comes first.
pub fn simulate(
    mdp: &EpisodicMdp,
    policy: &SoftmaxPolicy<'_>,
    kernel: Kernel<'_>,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    policy.features.check_mdp(mdp)?;
    if let Kernel::Tilted { values, omega } = kernel {
        if values.len() != mdp.n_states {
            return Err(Error::DimensionMismatch {
                expected: mdp.n_states,
                found: values.len(),
            });
        }
        if !omega.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tilted kernel"));
        }
    }
    let mut s = sample_index(&mdp.initial, rng.random::<f64>());
    let mut states = vec![s];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut score = vec![0.0; policy.features.k];
    let mut log_lr = 0.0;
    while s != mdp.terminal && actions.len() < mdp.max_steps {
        let probs = policy.action_probs(s);
        let a = sample_index(&probs, rng.random::<f64>());
        for (b, p) in probs.iter().enumerate() {
            let w = if b == a { 1.0 - p } else { -p };
            for (g, f) in score.iter_mut().zip(policy.features.phi(s, b)) {
                *g += w * f;
            }
        }
        rewards.push(draw_reward(mdp.reward_law(s, a), rng.random::<f64>()));
        let row = mdp.transition_row(s, a);
        let next = match kernel {
            Kernel::Nominal => sample_index(row, rng.random::<f64>()),
            Kernel::Tilted { omega, values } => {
                let tilted = tilted_row(row, values, omega);
                let next = sample_index(&tilted, rng.random::<f64>());
                log_lr += row[next].ln() - tilted[next].ln();
                next
            }
        };
        actions.push(a);
        states.push(next);
        s = next;
    }
    let noise = if mdp.smoothing > 0.0 {
        mdp.smoothing * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        0.0
    };
    let total_reward = rewards.iter().sum::<f64>() + noise;
    Ok(Trajectory {
        states,
        actions,
        rewards,
        noise,
        total_reward,
        score,
        log_lr,
    })
}

/// `Σ_t ∂θ log π(a_t|s_t)`. Rewards do not depend on `θ` and contribute
/// nothing.
pub fn trajectory_score(policy: &SoftmaxPolicy<'_>, trajectory: &Trajectory) -> Result<Vec<f64>> {
    if trajectory.states.len() != trajectory.actions.len() + 1 {
        return Err(Error::invalid("trajectory", "states must outnumber actions by one"));
    }
    let mut score = vec![0.0; policy.features.k];
    for (&s, &a) in trajectory.states.iter().zip(&trajectory.actions) {
        if s >= policy.features.n_states || a >= policy.features.n_actions {
            return Err(Error::invalid("trajectory", format!("({s}, {a}) out of range")));
        }
        for (g, d) in score.iter_mut().zip(policy.grad_log_prob(s, a)) {
            *g += d;
        }
    }
    Ok(score)
}

/// `Σ_t log π(a_t|s_t)`: the θ-dependent part of the path log-likelihood.
pub fn policy_log_likelihood(policy: &SoftmaxPolicy<'_>, states: &[usize], actions: &[usize]) -> f64 {
    states.iter().zip(actions).map(|(&s, &a)| policy.log_prob(s, a)).sum()
}

/// Approximate state values used to tilt transitions.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueFunction {
    /// `max_a φ(s,a)·θ` at the current policy.
    SoftmaxMax,
    Table(Vec<f64>),
}

impl ValueFunction {
    pub fn values(&self, policy: &SoftmaxPolicy<'_>) -> Vec<f64> {
        match self {
            ValueFunction::SoftmaxMax => (0..policy.features.n_states)
                .map(|s| softmax_value_heuristic(policy, s))
                .collect(),
            ValueFunction::Table(v) => v.clone(),
        }
    }
}

/// An MDP and feature table exposed as a [`StochasticModel`]: reward is the
/// return, score the trajectory score.
#[derive(Debug, Clone)]
pub struct MdpModel {
    pub mdp: EpisodicMdp,
    pub features: FeatureTable,
}

impl MdpModel {
    pub fn new(mdp: EpisodicMdp, features: FeatureTable) -> Result<Self> {
        features.check_mdp(&mdp)?;
        Ok(Self { mdp, features })
    }

    pub fn policy<'a>(&'a self, theta: &'a [f64]) -> Result<SoftmaxPolicy<'a>> {
        SoftmaxPolicy::new(&self.features, theta)
    }

    pub fn as_proposal(&self, value_fn: ValueFunction) -> Result<MdpProposal> {
        MdpProposal::new(self.clone(), value_fn)
    }
}

/// Binds an MDP and a policy family to the estimator interface.
pub fn as_model(mdp: EpisodicMdp, features: FeatureTable) -> Result<MdpModel> {
    MdpModel::new(mdp, features)
}

/// Binds an MDP, policy family and value function to the proposal interface.
pub fn as_proposal(mdp: EpisodicMdp, features: FeatureTable, value_fn: ValueFunction) -> Result<MdpProposal> {
    MdpProposal::new(MdpModel::new(mdp, features)?, value_fn)
}

impl StochasticModel for MdpModel {
    fn dim(&self) -> usize {
        self.features.k
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample> {
        let policy = self.policy(theta)?;
        Ok(simulate(&self.mdp, &policy, Kernel::Nominal, rng)?.into_sample())
    }
}

/// Value-tilted transition proposal; `ω` is a scalar, identity at 0.
#[derive(Debug, Clone)]
pub struct MdpProposal {
    pub model: MdpModel,
    pub value_fn: ValueFunction,
}

impl MdpProposal {
    pub fn new(model: MdpModel, value_fn: ValueFunction) -> Result<Self> {
        if let ValueFunction::Table(v) = &value_fn {
            if v.len() != model.mdp.n_states {
                return Err(Error::DimensionMismatch {
                    expected: model.mdp.n_states,
                    found: v.len(),
                });
            }
        }
        Ok(Self { model, value_fn })
    }

    fn values(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        Ok(self.value_fn.values(&self.model.policy(theta)?))
    }
}

impl Proposal for MdpProposal {
    fn dim(&self) -> usize {
        self.model.features.k
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
        check_omega(self, omega)?;
        let policy = self.model.policy(theta)?;
        let values = self.value_fn.values(&policy);
        let kernel = Kernel::Tilted {
            omega: omega[0],
            values: &values,
        };
        let traj = simulate(&self.model.mdp, &policy, kernel, rng)?;
        let log_lr = traj.log_lr;
        WeightedScoredSample::from_log_ratio(traj.into_sample(), log_lr)
    }

    fn log_ratio(&self, theta: &ParamVector, omega: &[f64], sample: &ScoredSample) -> Result<f64> {
        check_omega(self, omega)?;
        let values = self.values(theta)?;
        let mut total = 0.0;
        for (s, a, next) in decode_path(&sample.y)? {
            let row = self.model.mdp.transition_row(s, a);
            let tilted = tilted_row(row, &values, omega[0]);
            total += row[next].ln() - tilted[next].ln();
        }
        Ok(total)
    }

    fn grad_log_proposal(
        &self,
        theta: &ParamVector,
        omega: &[f64],
        sample: &ScoredSample,
    ) -> Result<Vec<f64>> {
        check_omega(self, omega)?;
        let values = self.values(theta)?;
        let mut grad = 0.0;
        for (s, a, next) in decode_path(&sample.y)? {
            let tilted = tilted_row(self.model.mdp.transition_row(s, a), &values, omega[0]);
            let expected: f64 = tilted.iter().zip(&values).map(|(p, v)| p * v).sum();
            grad += expected - values[next];
        }
        Ok(vec![grad])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::substream;

    /// start(0) → terminal(1) deterministically, reward 5 on both actions.
    fn two_state() -> (EpisodicMdp, FeatureTable) {
        let mdp = EpisodicMdp::new(
            vec![vec![vec![0.0, 1.0]; 2], vec![vec![0.0, 1.0]; 2]],
            vec![
                vec![vec![RewardAtom::new(5.0, 1.0)]; 2],
                vec![vec![RewardAtom::new(0.0, 1.0)]; 2],
            ],
            vec![1.0, 0.0],
            1,
            10,
        )
        .unwrap();
        let features = FeatureTable::new(vec![
            vec![vec![1.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
        ])
        .unwrap();
        (mdp, features)
    }

    #[test]
    fn deterministic_chain_single_step() {
        let (mdp, features) = two_state();
        for th in [-2.0, 0.0, 3.0] {
            let theta = [th];
            let policy = SoftmaxPolicy::new(&features, &theta).unwrap();
            let mut rng = substream(1, 0);
            let t = simulate(&mdp, &policy, Kernel::Nominal, &mut rng).unwrap();
            assert_eq!(t.len(), 1);
            assert_eq!(t.total_reward, 5.0);
            assert_eq!(t.log_lr, 0.0);
        }
    }

    #[test]
    fn single_step_score_at_zero() {
        let (_, features) = two_state();
        let theta = [0.0];
        let policy = SoftmaxPolicy::new(&features, &theta).unwrap();
        let t = Trajectory {
            states: vec![0, 1],
            actions: vec![0],
            rewards: vec![5.0],
            noise: 0.0,
            total_reward: 5.0,
            score: vec![],
            log_lr: 0.0,
        };
        assert_eq!(trajectory_score(&policy, &t).unwrap(), vec![0.5]);
        let empty = Trajectory {
            states: vec![1],
            actions: vec![],
            rewards: vec![],
            noise: 0.0,
            total_reward: 0.0,
            score: vec![],
            log_lr: 0.0,
        };
        assert_eq!(trajectory_score(&policy, &empty).unwrap(), vec![0.0]);
    }

    #[test]
    fn tilt_with_zero_omega_is_nominal() {
        let row = [0.2, 0.5, 0.3];
        let values = [4.0, -1.0, 2.0];
        let t = tilted_row(&row, &values, 0.0);
        for (a, b) in t.iter().zip(&row) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tilt_rows_normalize_and_shift_toward_low_values() {
        let row = [0.2, 0.5, 0.3, 0.0];
        let values = [4.0, -1.0, 2.0, -9.0];
        let mut prev_top = f64::INFINITY;
        for omega in [0.0, 0.5, 1.0, 2.0] {
            let t = tilted_row(&row, &values, omega);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(t[3], 0.0);
            assert!(t[0] < prev_top);
            prev_top = t[0];
        }
    }

    #[test]
    fn heuristic_values() {
        let features = FeatureTable::new(vec![vec![vec![-1.0], vec![3.0]]]).unwrap();
        let theta = [1.0];
        let p = SoftmaxPolicy::new(&features, &theta).unwrap();
        assert_eq!(softmax_value_heuristic(&p, 0), 3.0);
        let zero = [0.0];
        let p0 = SoftmaxPolicy::new(&features, &zero).unwrap();
        assert_eq!(softmax_value_heuristic(&p0, 0), 0.0);
        let single = FeatureTable::new(vec![vec![vec![2.0, -1.0]]]).unwrap();
        let th = [0.5, 4.0];
        let ps = SoftmaxPolicy::new(&single, &th).unwrap();
        assert_eq!(softmax_value_heuristic(&ps, 0), 2.0 * 0.5 - 4.0);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(EpisodicMdp::new(
            vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
            vec![vec![vec![RewardAtom::new(0.0, 1.0)]]; 2],
            vec![1.0, 0.0],
            1,
            5
        )
        .is_err());
        // terminal not absorbing
        assert!(EpisodicMdp::new(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![vec![RewardAtom::new(0.0, 1.0)]]; 2],
            vec![1.0, 0.0],
            1,
            5
        )
        .is_err());
    }

    #[test]
    fn step_cap_stops_non_terminating_chain() {
        // State 0 loops forever; terminal 1 is unreachable.
        let mdp = EpisodicMdp::new(
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![vec![vec![RewardAtom::new(1.0, 1.0)]]; 2],
            vec![1.0, 0.0],
            1,
            7,
        )
        .unwrap();
        let features = FeatureTable::new(vec![vec![vec![1.0]], vec![vec![0.0]]]).unwrap();
        let theta = [0.0];
        let p = SoftmaxPolicy::new(&features, &theta).unwrap();
        let t = simulate(&mdp, &p, Kernel::Nominal, &mut substream(0, 0)).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.total_reward, 7.0);
    }

    #[test]
    fn path_round_trip() {
        let t = Trajectory {
            states: vec![0, 2, 1],
            actions: vec![1, 0],
            rewards: vec![1.0, 2.0],
            noise: 0.0,
            total_reward: 3.0,
            score: vec![0.0],
            log_lr: 0.0,
        };
        assert_eq!(t.encode_path(), vec![0, 1, 2, 0, 1]);
        assert_eq!(decode_path(&t.encode_path()).unwrap(), vec![(0, 1, 2), (2, 0, 1)]);
        assert!(decode_path(&[0, 1]).is_err());
    }
}
