//! On a one-step choice between a sure reward and a lottery with a better
//! mean and a rare zero, the CVaR ascent and the plain policy gradient pick
//! opposite actions.

use cvarkit::env::{build_chain, ChainMdpConfig};
use cvarkit::optimizer::{cvarsgd, Estimator, ProjectionBox, SgdConfig, StepSchedule};
use cvarkit::oracle::{exact_cvar, exact_mean};

fn main() -> cvarkit::Result<()> {
    let alpha = 0.1;
    let chain = build_chain(&ChainMdpConfig::one_step_rare_loss())?;
    let m = &chain.model;
    let mut cfg = SgdConfig::new(alpha, ProjectionBox::symmetric(1, 3.0)?, 300, 1);
    cfg.step = StepSchedule::Harmonic { scale: 10.0 };
    for (name, est) in [("CVaR ascent", Estimator::Crude), ("policy gradient", Estimator::PlainLr)] {
        let theta = cvarsgd(m, est, &cfg)?.final_theta;
        let p_risky = 1.0 / (1.0 + (-theta[0]).exp());
        println!(
            "{name:>16}: P(risky) = {p_risky:.3}, exact mean {:.4}, exact CVaR {:.4}",
            exact_mean(m, &theta)?,
            exact_cvar(m, &theta, alpha)?
        );
    }
    Ok(())
}
