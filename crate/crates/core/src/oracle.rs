//! Ground truth for tests and studies: exact return distributions of small
//! MDPs by exhaustive enumeration, exact VaR/CVaR of discrete (optionally
//! uniformly smoothed) distributions, finite-difference CVaR gradients, and
//! closed forms for the Gaussian location family.
//!
//! Nothing here shares code with the sampling estimators it is used to check.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, SoftmaxPolicy};
use crate::risk::check_alpha;

/// Default cap on enumerated trajectories.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

const MASS_TOL: f64 = 1e-12;

/// A discrete return distribution, optionally convolved with
/// `Uniform[−η, η]` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    /// `(value, probability)` sorted by value, equal values merged.
    atoms: Vec<(f64, f64)>,
    smoothing: f64,
}

impl ExactDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>, smoothing: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("distribution", "no atoms"));
        }
        if atoms.iter().any(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("distribution", "bad atom"));
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(Error::invalid("distribution", "bad smoothing"));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= 1e-12 * last.0.abs().max(1.0) => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        merged.retain(|&(_, p)| p > 0.0);
        let mass: f64 = merged.iter().map(|a| a.1).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("distribution", format!("total mass {mass}")));
        }
        Ok(Self {
            atoms: merged,
            smoothing,
        })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn with_smoothing(&self, eta: f64) -> Result<Self> {
        Self::new(self.atoms.clone(), eta)
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let eta = self.smoothing;
        self.atoms
            .iter()
            .map(|&(v, p)| {
                if eta == 0.0 {
                    if v <= z {
                        p
                    } else {
                        0.0
                    }
                } else {
                    p * ((z - (v - eta)) / (2.0 * eta)).clamp(0.0, 1.0)
                }
            })
            .sum()
    }
}

/// Enumerates every `(action, reward, successor)` branch of the MDP under the
/// policy, accumulating path probability and return.
pub fn enumerate_mdp(
    model: &MdpModel,
    theta: &[f64],
    budget: usize,
) -> Result<ExactDistribution> {
    let policy = model.policy(theta)?;
    let mdp = &model.mdp;
    let mut leaves: Vec<(f64, f64)> = Vec::new();
    // Explicit stack: (state, steps taken, path probability, return so far).
    let mut stack: Vec<(usize, usize, f64, f64)> = mdp
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| (s, 0, p, 0.0))
        .collect();
    while let Some((s, t, prob, ret)) = stack.pop() {
        if s == mdp.terminal() || t == mdp.max_steps() {
            leaves.push((ret, prob));
            if leaves.len() > budget {
                return Err(Error::BudgetExceeded { limit: budget });
            }
            continue;
        }
        let probs = policy.action_probs(s);
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let row = mdp.transition_row(s, a);
            for atom in mdp.reward_law(s, a) {
                if atom.prob == 0.0 {
                    continue;
                }
                for (next, &pn) in row.iter().enumerate() {
                    if pn > 0.0 {
                        stack.push((next, t + 1, prob * pa * atom.prob * pn, ret + atom.value));
                    }
                }
            }
        }
        if stack.len() > budget {
            return Err(Error::BudgetExceeded { limit: budget });
        }
    }
    ExactDistribution::new(leaves, mdp.smoothing())
}

/// Exact lower-tail VaR and CVaR.
///
/// VaR is `inf{z : F(z) >= α}`. For a purely discrete law, CVaR weights the
/// VaR atom fractionally so exactly mass `α` is averaged. With smoothing the
/// law is continuous and the tail integral is computed in closed form.
pub fn exact_var_cvar(dist: &ExactDistribution, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if dist.smoothing == 0.0 {
        let mut cum = 0.0;
        let mut tail_sum = 0.0;
        for &(v, p) in &dist.atoms {
            if cum + p >= alpha - MASS_TOL {
                tail_sum += (alpha - cum) * v;
                return Ok((v, tail_sum / alpha));
            }
            cum += p;
            tail_sum += p * v;
        }
        let last = dist.atoms.last().expect("non-empty").0;
        return Ok((last, (tail_sum + (alpha - cum) * last) / alpha));
    }
    let eta = dist.smoothing;
    // F is piecewise linear; sweep the density breakpoints.
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * dist.atoms.len());
    for &(v, p) in &dist.atoms {
        events.push((v - eta, p / (2.0 * eta)));
        events.push((v + eta, -p / (2.0 * eta)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut var = events.last().expect("non-empty").0;
    let mut cdf = 0.0;
    let mut density = 0.0;
    for w in 0..events.len() {
        density += events[w].1;
        let (x0, x1) = (events[w].0, events.get(w + 1).map_or(events[w].0, |e| e.0));
        let next_cdf = cdf + density * (x1 - x0);
        if density > 0.0 && next_cdf >= alpha {
            var = x0 + (alpha - cdf) / density;
            break;
        }
        cdf = next_cdf;
    }
    let tail: f64 = dist
        .atoms
        .iter()
        .map(|&(v, p)| {
            let lo = v - eta;
            let hi = var.min(v + eta);
            if hi > lo {
                p * (hi * hi - lo * lo) / (4.0 * eta)
            } else {
                0.0
            }
        })
        .sum();
    Ok((var, tail / alpha))
}

/// Exact CVaR of the MDP return at `theta`.
pub fn exact_cvar(model: &MdpModel, theta: &[f64], alpha: f64) -> Result<f64> {
    let dist = enumerate_mdp(model, theta, ENUMERATION_BUDGET)?;
    Ok(exact_var_cvar(&dist, alpha)?.1)
}

/// Exact mean return at `theta`.
pub fn exact_mean(model: &MdpModel, theta: &[f64]) -> Result<f64> {
    Ok(enumerate_mdp(model, theta, ENUMERATION_BUDGET)?.mean())
}

/// A finite-difference CVaR gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub grad: Vec<f64>,
    /// Set when the exact VaR differs between `θ − h e_j` and `θ + h e_j`
    /// for an unsmoothed (atomic) law: the CVaR may be non-smooth there.
    pub crosses_atom: bool,
}

/// Central differences of the exact CVaR, one component at a time.
pub fn fd_cvar_gradient(model: &MdpModel, theta: &[f64], alpha: f64, h: f64) -> Result<FdGradient> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("finite-difference step", format!("{h}")));
    }
    SoftmaxPolicy::new(&model.features, theta)?;
    let mut grad = Vec::with_capacity(theta.len());
    let mut crosses_atom = false;
    for j in 0..theta.len() {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let dp = enumerate_mdp(model, &plus, ENUMERATION_BUDGET)?;
        let dm = enumerate_mdp(model, &minus, ENUMERATION_BUDGET)?;
        let (vp, cp) = exact_var_cvar(&dp, alpha)?;
        let (vm, cm) = exact_var_cvar(&dm, alpha)?;
        if dp.smoothing() == 0.0 && vp != vm {
            crosses_atom = true;
        }
        grad.push((cp - cm) / (2.0 * h));
    }
    Ok(FdGradient { grad, crosses_atom })
}

/// Closed forms for `Z ~ Normal(θ, 1)` at level `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTruth {
    pub var: f64,
    /// `θ − φ(z_α)/α`.
    pub cvar: f64,
    /// `∂θ CVaR = 1` for every `θ` and `α`.
    pub grad: f64,
    /// Limit of the tail estimator without the VaR baseline:
    /// `E[(Z−θ) Z | Z <= ν] = 1 − z_α φ(z_α)/α − θ φ(z_α)/α`, which is
    /// `1 − √(2/π) θ` at `α = 0.5`.
    pub naive_limit: f64,
    /// Mean-reward gradient `∂θ E[Z] = 1`.
    pub mean_grad: f64,
}

pub fn gaussian_truth(theta: f64, alpha: f64) -> Result<GaussianTruth> {
    check_alpha(alpha)?;
    let std = Normal::standard();
    let z = std.inverse_cdf(alpha);
    let phi = std.pdf(z);
    Ok(GaussianTruth {
        var: theta + z,
        cvar: theta - phi / alpha,
        grad: 1.0,
        naive_limit: 1.0 - z * phi / alpha - theta * phi / alpha,
        mean_grad: 1.0,
    })
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn var_cvar_examples() {
        let d = ExactDistribution::new(vec![(0.0, 0.5), (3.0, 0.5)], 0.0).unwrap();
        assert_eq!(exact_var_cvar(&d, 0.5).unwrap(), (0.0, 0.0));
        let c = ExactDistribution::new(vec![(2.5, 1.0)], 0.0).unwrap();
        for a in [0.01, 0.5, 0.99] {
            assert_eq!(exact_var_cvar(&c, a).unwrap(), (2.5, 2.5));
        }
        let f = ExactDistribution::new(vec![(0.0, 0.3), (1.0, 0.7)], 0.0).unwrap();
        let (v, cv) = exact_var_cvar(&f, 0.5).unwrap();
        assert_eq!(v, 1.0);
        assert!(approx(cv, 0.4, 1e-15));
    }

    #[test]
    fn smoothed_uniform_tail() {
        // Single atom at 0 smoothed by U[-1, 1]: VaR_α = 2α − 1, CVaR = α − 1.
        let d = ExactDistribution::new(vec![(0.0, 1.0)], 1.0).unwrap();
        for a in [0.1, 0.25, 0.5, 0.9] {
            let (v, c) = exact_var_cvar(&d, a).unwrap();
            assert!(approx(v, 2.0 * a - 1.0, 1e-12));
            assert!(approx(c, a - 1.0, 1e-12));
            assert!(approx(d.cdf(v), a, 1e-12));
        }
    }

    #[test]
    fn smoothing_converges_to_atom_convention() {
        let atoms = vec![(0.0, 0.3), (1.0, 0.7)];
        let (_, exact) = exact_var_cvar(&ExactDistribution::new(atoms.clone(), 0.0).unwrap(), 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for eta in [0.1, 0.01, 0.001] {
            let d = ExactDistribution::new(atoms.clone(), eta).unwrap();
            let err = (exact_var_cvar(&d, 0.5).unwrap().1 - exact).abs();
            assert!(err < prev);
            assert!(err <= eta);
            prev = err;
        }
    }

    #[test]
    fn gaussian_truth_values() {
        let t = gaussian_truth(0.0, 0.5).unwrap();
        assert_eq!(t.grad, 1.0);
        assert!(approx(t.cvar, -(2.0 / std::f64::consts::PI).sqrt(), 1e-12));
        let s = (2.0 / std::f64::consts::PI).sqrt();
        let naive = gaussian_truth(-2.0, 0.5).unwrap().naive_limit;
        assert!(approx(naive, 1.0 + 2.0 * s, 1e-12), "{naive}");
        let t5 = gaussian_truth(0.05, 0.05).unwrap();
        assert!(approx(t5.cvar - 0.05, gaussian_truth(0.0, 0.05).unwrap().cvar, 1e-12));
        let t05 = gaussian_truth(0.0, 0.05).unwrap();
        assert!(approx(t05.var, -1.6448536269514722, 1e-9));
        assert!(approx(t05.cvar, -2.062712807507318, 1e-9));
        let shifted = gaussian_truth(5.0, 0.3).unwrap();
        assert!(approx(shifted.cvar, 5.0 + gaussian_truth(0.0, 0.3).unwrap().cvar, 1e-12));
    }

    #[test]
    fn rejects_unnormalized_distribution() {
        assert!(ExactDistribution::new(vec![(0.0, 0.5)], 0.0).is_err());
        assert!(ExactDistribution::new(vec![], 0.0).is_err());
    }
}
