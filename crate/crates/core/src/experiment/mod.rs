//! Config-driven experiments: estimator studies, training runs and their
//! CSV/JSON artifacts.

pub mod config;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, ModelSpec, SCHEMA_VERSION};
pub use runner::{compare, run, run_config, Comparison, Manifest, RunOptions, RunOutcome};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CVARKIT_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] if it is set. Results do
/// not depend on the thread count.
pub fn init_threads() -> crate::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| crate::Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::Config(e.to_string()))?;
    }
    Ok(())
}
