//! Risky/safe chain MDPs small enough to enumerate exactly.
//!
//! Stage `s` offers a safe and a risky action. Each action pays a reward
//! drawn from its own discrete law and then either continues to stage
//! `s + 1` (with its continuation probability) or ends the episode. Features
//! are one-hot on the risky action per stage, so `θ_s` is the log-odds of
//! taking the risky action at stage `s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{EpisodicMdp, FeatureTable, MdpModel, RewardAtom};
use crate::oracle::ENUMERATION_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAction {
    /// Probability of moving on to the next stage (otherwise the episode
    /// ends). Ignored at the last stage, which always ends.
    #[serde(default = "one")]
    pub continue_prob: f64,
    pub rewards: Vec<RewardAtom>,
}

fn one() -> f64 {
    1.0
}

impl ChainAction {
    pub fn deterministic(reward: f64) -> Self {
        Self {
            continue_prob: 1.0,
            rewards: vec![RewardAtom::new(reward, 1.0)],
        }
    }

    pub fn lottery(atoms: &[(f64, f64)]) -> Self {
        Self {
            continue_prob: 1.0,
            rewards: atoms.iter().map(|&(v, p)| RewardAtom::new(v, p)).collect(),
        }
    }

    pub fn with_continue_prob(mut self, p: f64) -> Self {
        self.continue_prob = p;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStage {
    pub safe: ChainAction,
    pub risky: ChainAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMdpConfig {
    pub stages: Vec<ChainStage>,
    /// Half-width of the uniform noise added to the return.
    #[serde(default)]
    pub smoothing: f64,
}

impl ChainMdpConfig {
    /// One stage: safe pays 1, risky pays 0 or 3 with equal odds.
    pub fn one_step_coin_flip() -> Self {
        Self {
            stages: vec![ChainStage {
                safe: ChainAction::deterministic(1.0),
                risky: ChainAction::lottery(&[(0.0, 0.5), (3.0, 0.5)]),
            }],
            smoothing: 0.0,
        }
    }

    /// One stage: safe pays 1, risky pays 2 except for a 10% chance of 0.
    /// The risky action has the better mean (1.8) but a CVaR₀.₁ of 0.
    pub fn one_step_rare_loss() -> Self {
        Self {
            stages: vec![ChainStage {
                safe: ChainAction::deterministic(1.0),
                risky: ChainAction::lottery(&[(0.0, 0.1), (2.0, 0.9)]),
            }],
            smoothing: 0.0,
        }
    }

    /// Two stages with early termination, used for the estimator-vs-oracle
    /// check.
    pub fn two_stage() -> Self {
        Self {
            stages: vec![
                ChainStage {
                    safe: ChainAction::deterministic(1.0).with_continue_prob(0.9),
                    risky: ChainAction::lottery(&[(0.0, 0.2), (2.0, 0.8)]).with_continue_prob(0.8),
                },
                ChainStage {
                    safe: ChainAction::deterministic(0.5),
                    risky: ChainAction::lottery(&[(-1.0, 0.15), (1.5, 0.85)]),
                },
            ],
            smoothing: 0.0,
        }
    }

    pub fn with_smoothing(mut self, eta: f64) -> Self {
        self.smoothing = eta;
        self
    }

    /// Upper bound on the number of distinct trajectories.
    pub fn trajectory_count(&self) -> f64 {
        // paths[s]: trajectories starting at stage s.
        let mut paths = 0.0;
        for stage in self.stages.iter().rev() {
            let per_action = |a: &ChainAction| {
                let r = a.rewards.len() as f64;
                if paths == 0.0 || a.continue_prob == 0.0 {
                    r
                } else if a.continue_prob == 1.0 {
                    r * paths
                } else {
                    r * (1.0 + paths)
                }
            };
            paths = per_action(&stage.safe) + per_action(&stage.risky);
        }
        paths
    }
}

/// Built chain: the MDP model plus the index of the risky action.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    pub model: MdpModel,
}

pub const SAFE: usize = 0;
pub const RISKY: usize = 1;

pub fn build_chain(config: &ChainMdpConfig) -> Result<ChainMdp> {
    let n = config.stages.len();
    if n == 0 {
        return Err(Error::invalid("chain", "needs at least one stage"));
    }
    if config.trajectory_count() > ENUMERATION_BUDGET as f64 {
        return Err(Error::BudgetExceeded {
            limit: ENUMERATION_BUDGET,
        });
    }
    let terminal = n;
    let n_states = n + 1;
    let mut transitions = Vec::with_capacity(n_states);
    let mut rewards = Vec::with_capacity(n_states);
    let mut features = Vec::with_capacity(n_states);
    for (s, stage) in config.stages.iter().enumerate() {
        let mut rows = Vec::with_capacity(2);
        let mut laws = Vec::with_capacity(2);
        for action in [&stage.safe, &stage.risky] {
            let c = action.continue_prob;
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid("chain", format!("continue probability {c}")));
            }
            let mut row = vec![0.0; n_states];
            if s + 1 < n {
                row[s + 1] = c;
                row[terminal] = 1.0 - c;
            } else {
                row[terminal] = 1.0;
            }
            rows.push(row);
            laws.push(action.rewards.clone());
        }
        transitions.push(rows);
        rewards.push(laws);
        let mut risky = vec![0.0; n];
        risky[s] = 1.0;
        features.push(vec![vec![0.0; n], risky]);
    }
    transitions.push(vec![{
        let mut r = vec![0.0; n_states];
        r[terminal] = 1.0;
        r
    }; 2]);
    rewards.push(vec![vec![RewardAtom::new(0.0, 1.0)]; 2]);
    features.push(vec![vec![0.0; n]; 2]);
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    let mdp = EpisodicMdp::new(transitions, rewards, initial, terminal, n)?.with_smoothing(config.smoothing)?;
    Ok(ChainMdp {
        model: MdpModel::new(mdp, FeatureTable::new(features)?)?,
    })
}
