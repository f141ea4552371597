//! Mini-Tetris: warm-start a policy with the plain policy gradient, then
//! continue with CVaR ascent and with the plain gradient and compare the
//! learned weights and return distributions.
//!
//! `cargo run --release --example tetris_risk -- [iterations] [batch]`
//! (defaults 50 and 500; the full comparison uses 200 and 1000).

use cvarkit::env::{build_tetris, TetrisConfig};
use cvarkit::model::ParamVector;
use cvarkit::optimizer::{cvarsgd, evaluate_policy, BatchSchedule, Estimator, ProjectionBox, SgdConfig, StepSchedule};

fn main() -> cvarkit::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let iterations = args.next().unwrap_or(50);
    let batch = args.next().unwrap_or(500);
    let alpha = 0.05;
    let env = build_tetris(TetrisConfig::default())?;
    let k = env.config().features.len();
    let projection = ProjectionBox::symmetric(k, 20.0)?;

    let mut warm = SgdConfig::new(alpha, projection.clone(), 100, 2024);
    warm.step = StepSchedule::Constant { step: 0.003 };
    warm.batch = BatchSchedule::Fixed { size: batch };
    let theta0 = cvarsgd(&env, Estimator::PlainLr, &warm)?.final_theta;

    let names: Vec<&str> = env.config().features.iter().map(|f| f.name()).collect();
    println!("{:>16} {}", "", names.iter().map(|n| format!("{n:>15}")).collect::<String>());
    println!("{:>16} {}", "warm start", theta0.iter().map(|t| format!("{t:>15.3}")).collect::<String>());
    for (name, est) in [("CVaR ascent", Estimator::Crude), ("policy gradient", Estimator::PlainLr)] {
        let mut cfg = SgdConfig::new(alpha, projection.clone(), iterations, 1);
        cfg.theta0 = theta0.clone();
        cfg.step = StepSchedule::Constant { step: 0.001 };
        cfg.batch = BatchSchedule::Fixed { size: batch };
        let theta = cvarsgd(&env, est, &cfg)?.final_theta;
        let ev = evaluate_policy(&env, &ParamVector::new(theta.clone())?, alpha, 5_000, 99)?;
        println!("{name:>16} {}", theta.iter().map(|t| format!("{t:>15.3}")).collect::<String>());
        println!("{:>16} mean {:.2}, CVaR {:.2}", "", ev.mean, ev.cvar);
    }
    Ok(())
}
