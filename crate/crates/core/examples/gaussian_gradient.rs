//! Tail gradient estimates on `Z ~ Normal(θ, 1)` against closed forms.
//!
//! The CVaR gradient of a location family is exactly 1. The estimator without
//! the VaR baseline converges to something else that depends on `θ`.

use cvarkit::model::{sample_batch, GaussianMean, ParamVector};
use cvarkit::oracle::gaussian_truth;
use cvarkit::{gcvar_estimate, naive_tail_lr_estimate, plain_lr_estimate};

fn main() -> cvarkit::Result<()> {
    let alpha = 0.5;
    let n = 100_000;
    println!("alpha = {alpha}, N = {n}");
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "theta", "gcvar", "naive", "naive lim", "plain lr");
    for th in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let theta = ParamVector::scalar(th)?;
        let batch = sample_batch(&GaussianMean, &theta, n, 7)?;
        let truth = gaussian_truth(th, alpha)?;
        println!(
            "{th:>6.1} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            gcvar_estimate(&batch, alpha)?.grad[0],
            naive_tail_lr_estimate(&batch, alpha)?.grad[0],
            truth.naive_limit,
            plain_lr_estimate(&batch)?.grad[0],
        );
    }
    Ok(())
}
