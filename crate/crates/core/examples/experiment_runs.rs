//! Config-driven runs: train two chain policies, then compare them. The same
//! files are produced by `cvarkit run <config>`; see `configs/`.

use cvarkit::experiment::{compare, run_config, ExperimentConfig, RunOptions};

fn config(estimator: &str) -> String {
    format!(
        r#"{{
        "schema_version": 1,
        "name": "chain_{estimator}",
        "model": {{"family": "chain", "preset": "rare_loss"}},
        "alpha": 0.1,
        "seeds": [1, 2],
        "experiment": {{
            "kind": "train",
            "estimator": {{"kind": "{estimator}"}},
            "iterations": 200,
            "box": {{"radius": 3.0}},
            "step": {{"kind": "harmonic", "scale": 10.0}},
            "n_eval": 10000
        }}
    }}"#
    )
}

fn main() -> cvarkit::Result<()> {
    let root = std::env::temp_dir().join("cvarkit_example_runs");
    let mut dirs = Vec::new();
    for est in ["crude", "plain_lr"] {
        let cfg = ExperimentConfig::from_json(&config(est))?;
        let options = RunOptions {
            output_dir: Some(root.join(est)),
            seed: None,
        };
        let outcome = run_config(cfg, &options)?;
        print!("{est}:\n{}", outcome.report);
        dirs.push(outcome.dir);
    }
    let cmp = compare(&dirs[0], &dirs[1])?;
    println!("{}", serde_json::to_string_pretty(&cmp)?);
    println!("artifacts under {}", root.display());
    Ok(())
}
