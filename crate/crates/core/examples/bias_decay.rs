//! Bias of the tail gradient estimator as the batch grows.

use cvarkit::gcvar::{bias_study, loglog_slope};
use cvarkit::model::{GaussianMean, ParamVector};
use cvarkit::oracle::gaussian_truth;

fn main() -> cvarkit::Result<()> {
    let alpha = 0.5;
    let theta = ParamVector::scalar(0.0)?;
    let truth = gaussian_truth(0.0, alpha)?.grad;
    let rows = bias_study(&GaussianMean, &theta, &[truth], alpha, &[100, 1_000, 10_000, 100_000], 200, 1)?;
    for r in &rows {
        println!("N = {:>7}: mean estimate {:.5}, |bias| {:.3e}", r.n, r.mean_estimate[0], r.mean_abs_bias);
    }
    println!("log-log slope: {:.3}", loglog_slope(&rows).unwrap_or(f64::NAN));
    Ok(())
}
