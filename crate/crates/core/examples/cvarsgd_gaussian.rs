//! Projected CVaR ascent on the Gaussian family with the default schedules,
//! once with nominal sampling and once with importance sampling.

use cvarkit::importance::{GaussianShiftProposal, SaaConfig};
use cvarkit::model::{GaussianMean, ParamVector};
use cvarkit::optimizer::{cvarsgd, evaluate_policy, BatchSchedule, Estimator, ProjectionBox, SgdConfig};

fn main() -> cvarkit::Result<()> {
    let mut cfg = SgdConfig::new(0.5, ProjectionBox::symmetric(1, 1.0)?, 2000, 1);
    cfg.theta0 = vec![-1.0];
    let trace = cvarsgd(&GaussianMean, Estimator::Crude, &cfg)?;
    for r in trace.records.iter().filter(|r| r.iteration.is_power_of_two()) {
        println!("iter {:>5}: theta {:+.4}, batch {:>5}, batch CVaR {:+.4}", r.iteration, r.theta[0], r.batch_size, r.cvar_return);
    }
    let ev = evaluate_policy(&GaussianMean, &ParamVector::new(trace.final_theta.clone())?, 0.5, 100_000, 9)?;
    println!("final theta {:.4}, evaluated CVaR {:.4}", trace.final_theta[0], ev.cvar);

    let mut is_cfg = SgdConfig::new(0.01, ProjectionBox::symmetric(1, 1.0)?, 200, 2);
    is_cfg.theta0 = vec![-1.0];
    is_cfg.batch = BatchSchedule::Fixed { size: 200 };
    let est = Estimator::ImportanceSampling {
        proposal: &GaussianShiftProposal,
        refit_period: 50,
        saa: SaaConfig::default(),
    };
    let is_trace = cvarsgd(&GaussianMean, est, &is_cfg)?;
    println!(
        "alpha = 0.01 with importance sampling: final theta {:.4}, last omega {:?}",
        is_trace.final_theta[0],
        is_trace.records.last().and_then(|r| r.omega.clone())
    );
    Ok(())
}
