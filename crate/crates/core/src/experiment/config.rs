//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{build_chain, build_tetris, ChainMdpConfig, ChainStage, TetrisConfig, TetrisEnv};
use crate::error::{Error, Result};
use crate::importance::{GaussianShiftProposal, Proposal, SaaConfig};
use crate::mdp::{MdpModel, ValueFunction};
use crate::model::{CategoricalSoftmax, GaussianMean, StochasticModel};
use crate::optimizer::{BatchSchedule, Estimator, ProjectionBox, StepSchedule};
use crate::risk::check_alpha;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: ExperimentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainPreset {
    CoinFlip,
    RareLoss,
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `Z ~ Normal(θ, 1)`, one parameter.
    Gaussian,
    Categorical {
        features: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        #[serde(default)]
        smoothing: f64,
    },
    /// Either a preset or explicit stages.
    Chain {
        #[serde(default)]
        preset: Option<ChainPreset>,
        #[serde(default)]
        stages: Option<Vec<ChainStage>>,
        #[serde(default)]
        smoothing: f64,
    },
    Tetris {
        #[serde(default)]
        config: TetrisConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    #[default]
    Crude,
    Is {
        #[serde(default = "default_refit")]
        refit_period: usize,
        #[serde(default)]
        saa: SaaConfig,
    },
    PlainLr,
}

fn default_refit() -> usize {
    50
}

/// The box `Θ`: either `[-radius, radius]^k` or explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl BoxSpec {
    pub fn resolve(&self, k: usize) -> Result<ProjectionBox> {
        match (self.radius, &self.lower, &self.upper) {
            (Some(r), None, None) => ProjectionBox::symmetric(k, r),
            (None, Some(l), Some(u)) => {
                if l.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        found: l.len(),
                    });
                }
                ProjectionBox::new(l.clone(), u.clone())
            }
            _ => Err(Error::Config("box needs either `radius` or both `lower` and `upper`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartSpec {
    pub iterations: usize,
    pub step: StepSchedule,
    pub batch: BatchSchedule,
    /// Fixed warm-start seed; derived from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default)]
    pub estimator: EstimatorSpec,
    pub iterations: usize,
    #[serde(rename = "box")]
    pub projection: BoxSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default = "default_step")]
    pub step: StepSchedule,
    /// Defaults to the log-power schedule with floor `⌈4/α⌉`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<WarmStartSpec>,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
}

fn default_step() -> StepSchedule {
    StepSchedule::Harmonic { scale: 1.0 }
}

fn default_n_eval() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    BiasStudy {
        theta: Vec<f64>,
        batch_sizes: Vec<usize>,
        replications: usize,
    },
    VarianceComparison {
        theta: Vec<f64>,
        n: usize,
        replications: usize,
        #[serde(default)]
        saa: SaaConfig,
    },
    Train(TrainSpec),
    Evaluate {
        theta: Vec<f64>,
        #[serde(default = "default_n_eval")]
        n_eval: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        histogram: Option<HistogramSpec>,
    },
    OracleCheck {
        theta: Vec<f64>,
        n: usize,
        #[serde(default = "default_fd_step")]
        fd_step: f64,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        #[serde(default = "default_abs_tol")]
        abs_tol: f64,
    },
}

fn default_fd_step() -> f64 {
    1e-4
}

fn default_rel_tol() -> f64 {
    0.02
}

fn default_abs_tol() -> f64 {
    1e-3
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BiasStudy { .. } => "bias_study",
            ExperimentKind::VarianceComparison { .. } => "variance_comparison",
            ExperimentKind::Train(_) => "train",
            ExperimentKind::Evaluate { .. } => "evaluate",
            ExperimentKind::OracleCheck { .. } => "oracle_check",
        }
    }
}

/// A model built from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Gaussian(GaussianMean),
    Categorical(CategoricalSoftmax),
    Chain(MdpModel),
    Tetris(TetrisEnv),
}

impl BuiltModel {
    pub fn model(&self) -> &dyn StochasticModel {
        match self {
            BuiltModel::Gaussian(m) => m,
            BuiltModel::Categorical(m) => m,
            BuiltModel::Chain(m) => m,
            BuiltModel::Tetris(m) => m,
        }
    }

    /// The importance-sampling family for this model, if there is one.
    pub fn proposal(&self) -> Result<Box<dyn Proposal>> {
        match self {
            BuiltModel::Gaussian(_) => Ok(Box::new(GaussianShiftProposal)),
            BuiltModel::Chain(m) => Ok(Box::new(m.as_proposal(ValueFunction::SoftmaxMax)?)),
            BuiltModel::Categorical(_) => Err(Error::Config("no proposal family for the categorical model".into())),
            BuiltModel::Tetris(_) => Err(Error::Config("no proposal family for tetris".into())),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltModel> {
        Ok(match self {
            ModelSpec::Gaussian => BuiltModel::Gaussian(GaussianMean),
            ModelSpec::Categorical {
                features,
                rewards,
                smoothing,
            } => BuiltModel::Categorical(
                CategoricalSoftmax::new(features.clone(), rewards.clone())?.with_smoothing(*smoothing)?,
            ),
            ModelSpec::Chain {
                preset,
                stages,
                smoothing,
            } => {
                let base = match (preset, stages) {
                    (Some(ChainPreset::CoinFlip), None) => ChainMdpConfig::one_step_coin_flip(),
                    (Some(ChainPreset::RareLoss), None) => ChainMdpConfig::one_step_rare_loss(),
                    (Some(ChainPreset::TwoStage), None) => ChainMdpConfig::two_stage(),
                    (None, Some(stages)) => ChainMdpConfig {
                        stages: stages.clone(),
                        smoothing: 0.0,
                    },
                    _ => return Err(Error::Config("chain needs exactly one of `preset` or `stages`".into())),
                };
                BuiltModel::Chain(build_chain(&base.with_smoothing(*smoothing))?.model)
            }
            ModelSpec::Tetris { config } => BuiltModel::Tetris(build_tetris(config.clone())?),
        })
    }
}

impl EstimatorSpec {
    pub fn resolve<'p>(&self, proposal: Option<&'p dyn Proposal>) -> Result<Estimator<'p>> {
        Ok(match *self {
            EstimatorSpec::Crude => Estimator::Crude,
            EstimatorSpec::PlainLr => Estimator::PlainLr,
            EstimatorSpec::Is { refit_period, saa } => Estimator::ImportanceSampling {
                proposal: proposal.ok_or_else(|| Error::Config("importance sampling needs a proposal".into()))?,
                refit_period,
                saa,
            },
        })
    }
}

fn check_theta(theta: &[f64], k: usize) -> Result<()> {
    if theta.len() != k {
        return Err(Error::Config(format!("theta has {} components, the model has {k}", theta.len())));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("theta"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that can be checked without running: the schema
    /// version, that the model builds, dimensions, and estimator support.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        check_alpha(self.alpha)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        let built = self.model.build()?;
        let k = built.model().dim();
        match &self.experiment {
            ExperimentKind::BiasStudy {
                theta,
                batch_sizes,
                replications,
            } => {
                check_theta(theta, k)?;
                if batch_sizes.is_empty() || batch_sizes.contains(&0) || *replications == 0 {
                    return Err(Error::Config("bias study needs positive batch sizes and replications".into()));
                }
                if !matches!(built, BuiltModel::Gaussian(_) | BuiltModel::Chain(_)) {
                    return Err(Error::Config("bias study needs a model with a known gradient".into()));
                }
            }
            ExperimentKind::VarianceComparison {
                theta,
                n,
                replications,
                ..
            } => {
                check_theta(theta, k)?;
                built.proposal()?;
                if *n == 0 || *replications < 2 {
                    return Err(Error::Config("variance comparison needs n >= 1 and replications >= 2".into()));
                }
            }
            ExperimentKind::Train(t) => {
                t.projection.resolve(k)?;
                if let Some(t0) = &t.theta0 {
                    check_theta(t0, k)?;
                }
                if let EstimatorSpec::Is { refit_period, .. } = t.estimator {
                    built.proposal()?;
                    if refit_period == 0 {
                        return Err(Error::Config("refit_period must be at least 1".into()));
                    }
                }
                if (t.n_eval as f64) < (1.0 / self.alpha).ceil() {
                    return Err(Error::Config("n_eval must be at least ⌈1/α⌉".into()));
                }
            }
            ExperimentKind::Evaluate { theta, n_eval, .. } => {
                check_theta(theta, k)?;
                if (*n_eval as f64) < (1.0 / self.alpha).ceil() {
                    return Err(Error::Config("n_eval must be at least ⌈1/α⌉".into()));
                }
            }
            ExperimentKind::OracleCheck { theta, n, .. } => {
                check_theta(theta, k)?;
                if *n == 0 {
                    return Err(Error::Config("oracle check needs n >= 1".into()));
                }
                if !matches!(built, BuiltModel::Gaussian(_) | BuiltModel::Chain(_)) {
                    return Err(Error::Config("oracle check needs the gaussian or chain model".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON of the configuration without its output directory;
    /// this is what the manifest hash covers.
    pub fn canonical_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        Ok(serde_json::to_string_pretty(&c)?)
    }
}
