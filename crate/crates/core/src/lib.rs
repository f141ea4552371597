//! CVaR optimization by likelihood-ratio gradient estimation.
//!
//! The crate estimates the gradient of the lower-tail conditional value at
//! risk of a parameterized stochastic system from samples and their score
//! functions, optionally under importance sampling, and optimizes it with
//! projected stochastic gradient ascent. Episodic MDPs with softmax policies
//! plug in as models, which turns the optimizer into a risk-sensitive policy
//! gradient method.
//!
//! Module map:
//!
//! - [`model`]: the sampling interface and analytic test families.
//! - [`risk`]: empirical VaR and CVaR.
//! - [`gcvar`]: the tail gradient estimator, the no-baseline ablation and the
//!   plain expected-return estimator.
//! - [`importance`]: weighted estimators and proposal fitting.
//! - [`optimizer`]: CVaRSGD and policy evaluation.
//! - [`mdp`], [`env`]: episodic MDPs, the chain family and mini-Tetris.
//! - [`oracle`]: exact distributions and analytic ground truth.
//! - [`experiment`]: config-driven runs and CSV output.

pub mod env;
pub mod error;
pub mod experiment;
pub mod gcvar;
pub mod importance;
pub mod mdp;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod risk;

pub use error::{Error, Result};
pub use gcvar::{gcvar_estimate, naive_tail_lr_estimate, plain_lr_estimate, GradientEstimate};
pub use importance::{fit_proposal_saa, is_gcvar_estimate, Proposal, SaaConfig};
pub use model::{ParamVector, ScoredSample, StochasticModel};
pub use optimizer::{cvarsgd, evaluate_policy, Estimator, ProjectionBox, SgdConfig};
pub use risk::{empirical_cvar, empirical_var};
