//! Exact return distribution of a small chain MDP, its CVaR gradient by
//! finite differences, and the sampled estimate at a million episodes.

use cvarkit::env::{build_chain, ChainMdpConfig};
use cvarkit::gcvar_estimate;
use cvarkit::model::{sample_batch, ParamVector};
use cvarkit::oracle::{enumerate_mdp, exact_var_cvar, fd_cvar_gradient, ENUMERATION_BUDGET};

fn main() -> cvarkit::Result<()> {
    let chain = build_chain(&ChainMdpConfig::two_stage().with_smoothing(0.05))?;
    let theta = ParamVector::new(vec![-1.0, -1.0])?;
    let alpha = 0.1;
    let dist = enumerate_mdp(&chain.model, &theta, ENUMERATION_BUDGET)?;
    println!("return atoms (value, probability):");
    for (v, p) in dist.atoms() {
        println!("  {v:+.2}  {p:.5}");
    }
    let (var, cvar) = exact_var_cvar(&dist, alpha)?;
    println!("exact VaR {var:.5}, CVaR {cvar:.5} (smoothed, eta = 0.05)");
    let fd = fd_cvar_gradient(&chain.model, &theta, alpha, 1e-4)?;
    let est = gcvar_estimate(&sample_batch(&chain.model, &theta, 1_000_000, 1)?, alpha)?;
    for j in 0..2 {
        println!("component {j}: estimate {:+.5}, finite difference {:+.5}", est.grad[j], fd.grad[j]);
    }
    Ok(())
}
