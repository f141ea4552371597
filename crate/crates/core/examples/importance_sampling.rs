//! Fitting a mean-shift proposal for a small α and measuring the variance
//! reduction of the weighted estimator.

use cvarkit::importance::{fit_proposal_saa, variance_comparison, GaussianShiftProposal, SaaConfig};
use cvarkit::model::{GaussianMean, ParamVector};

fn main() -> cvarkit::Result<()> {
    let alpha = 0.01;
    let theta = ParamVector::scalar(0.0)?;
    let fit = fit_proposal_saa(&GaussianMean, &GaussianShiftProposal, &theta, alpha, &SaaConfig::default(), 3)?;
    println!(
        "SAA: omega = {:.4}, objective {:.4} -> {:.4} ({:?})",
        fit.omega[0], fit.initial_objective, fit.final_objective, fit.termination
    );
    let vc = variance_comparison(&GaussianMean, &GaussianShiftProposal, &theta, alpha, &fit.omega, 200, 200, 4)?;
    println!("crude: mean {:.4}, variance {:.4}", vc.mean_crude[0], vc.var_crude[0]);
    println!("IS:    mean {:.4}, variance {:.4}", vc.mean_is[0], vc.var_is[0]);
    println!("variance ratio IS/crude: {:.4}", vc.ratios()[0]);
    Ok(())
}
