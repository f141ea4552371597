//! Episode simulation checked against quantities computed independently of
//! the simulator.

use cvarkit::env::{build_chain, ChainMdpConfig};
use cvarkit::importance::{sample_weighted_batch, Proposal};
use cvarkit::mdp::{policy_log_likelihood, simulate, trajectory_score, Kernel, ValueFunction};
use cvarkit::model::{sample_batch, score_identity_check, substream, ParamVector};
use cvarkit::oracle::{enumerate_mdp, exact_mean};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn second_stage_visit_frequency() {
    let chain = build_chain(&ChainMdpConfig::two_stage()).unwrap();
    let theta = ParamVector::new(vec![0.7, -0.3]).unwrap();
    let n = 200_000;
    let batch = sample_batch(&chain.model, &theta, n, 12).unwrap();
    // y = [s0, a0, s1, ...]; the second stage is state 1.
    let visits = batch.iter().filter(|s| s.y[2] == 1).count() as f64 / n as f64;
    let p = sigmoid(0.7);
    let expected = (1.0 - p) * 0.9 + p * 0.8;
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!((visits - expected).abs() < 4.0 * se, "{visits} vs {expected}");
}

#[test]
fn monte_carlo_mean_matches_enumeration() {
    let chain = build_chain(&ChainMdpConfig::two_stage()).unwrap();
    let theta = ParamVector::new(vec![-0.4, 1.1]).unwrap();
    let n = 200_000;
    let batch = sample_batch(&chain.model, &theta, n, 13).unwrap();
    let mc = batch.iter().map(|s| s.reward).sum::<f64>() / n as f64;
    let var = batch.iter().map(|s| (s.reward - mc).powi(2)).sum::<f64>() / (n - 1) as f64;
    let exact = exact_mean(&chain.model, &theta).unwrap();
    assert!((mc - exact).abs() < 4.0 * (var / n as f64).sqrt(), "{mc} vs {exact}");
}

#[test]
fn trajectory_score_matches_finite_differences() {
    let chain = build_chain(&ChainMdpConfig::two_stage()).unwrap();
    let theta = [0.3, -1.2];
    let h = 1e-6;
    for seed in 0..20 {
        let policy = chain.model.policy(&theta).unwrap();
        let traj = simulate(&chain.model.mdp, &policy, Kernel::Nominal, &mut substream(seed, 0)).unwrap();
        let score = trajectory_score(&policy, &traj).unwrap();
        assert_eq!(score, traj.score);
        for j in 0..2 {
            let mut up = theta;
            let mut down = theta;
            up[j] += h;
            down[j] -= h;
            let ll = |t: &[f64]| {
                let p = chain.model.policy(t).unwrap();
                policy_log_likelihood(&p, &traj.states, &traj.actions)
            };
            let fd = (ll(&up) - ll(&down)) / (2.0 * h);
            assert!((fd - score[j]).abs() < 1e-6, "seed {seed} component {j}: {fd} vs {}", score[j]);
        }
    }
}

#[test]
fn score_has_zero_mean() {
    let chain = build_chain(&ChainMdpConfig::two_stage()).unwrap();
    let theta = ParamVector::new(vec![1.0, 0.5]).unwrap();
    let n = 200_000;
    let m = score_identity_check(&chain.model, &theta, n, 14).unwrap();
    for v in m {
        assert!(v.abs() < 4.0 / (n as f64).sqrt(), "{v}");
    }
}

#[test]
fn tilted_rollouts_reweight_to_the_nominal_mean() {
    let chain = build_chain(&ChainMdpConfig::two_stage()).unwrap();
    let proposal = chain.model.as_proposal(ValueFunction::SoftmaxMax).unwrap();
    let theta = ParamVector::new(vec![0.2, 0.9]).unwrap();
    let n = 200_000;
    for omega in [-1.5, 2.0] {
        let batch = sample_weighted_batch(&proposal, &theta, &[omega], n, 15).unwrap();
        let terms: Vec<f64> = batch.iter().map(|s| s.likelihood_ratio * s.inner.reward).collect();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = exact_mean(&chain.model, &theta).unwrap();
        assert!((mean - exact).abs() < 4.0 * (var / n as f64).sqrt(), "ω={omega}: {mean} vs {exact}");
        let lr_mean = batch.iter().map(|s| s.likelihood_ratio).sum::<f64>() / n as f64;
        assert!((lr_mean - 1.0).abs() < 0.02, "ω={omega}: E[lr] = {lr_mean}");
        for s in batch.iter().take(50) {
            let lr = proposal.log_ratio(&theta, &[omega], &s.inner).unwrap().exp();
            assert!((lr - s.likelihood_ratio).abs() < 1e-12 * lr.max(1.0));
        }
    }
}

#[test]
fn smoothing_widens_but_preserves_the_mean() {
    let chain = build_chain(&ChainMdpConfig::two_stage().with_smoothing(0.25)).unwrap();
    let theta = [0.0, 0.0];
    let d = enumerate_mdp(&chain.model, &theta, 10_000).unwrap();
    assert_eq!(d.smoothing(), 0.25);
    let batch = sample_batch(&chain.model, &ParamVector::new(theta.to_vec()).unwrap(), 1000, 16).unwrap();
    for s in &batch {
        let noise = *s.x.last().unwrap();
        assert!(noise.abs() <= 0.25);
        let base: f64 = s.x[..s.x.len() - 1].iter().sum();
        assert!((base + noise - s.reward).abs() < 1e-12);
    }
}
