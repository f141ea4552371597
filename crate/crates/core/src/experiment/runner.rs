//! Executes configs and writes run directories.
//!
//! A run directory holds `config.json`, `manifest.json` and per-seed
//! artifacts named `<artifact>_seed<seed>.<ext>`. Nothing written depends on
//! wall-clock time, so the same config and seeds reproduce every file byte
//! for byte.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{BuiltModel, ExperimentConfig, ExperimentKind, HistogramSpec, TrainSpec};
use crate::error::{Error, Result};
use crate::gcvar::{bias_study, gcvar_estimate, loglog_slope};
use crate::importance::{fit_proposal_saa, variance_comparison};
use crate::model::{derive_seed, sample_batch, ParamVector, StochasticModel};
use crate::optimizer::{
    cvarsgd_with_observer, evaluate_policy, BatchSchedule, Estimator, Histogram, IterationRecord, SgdConfig,
};
use crate::oracle::{exact_cvar, exact_mean, fd_cvar_gradient, gaussian_truth};

const WARM_TAG: u64 = 0x7761_726d;
const EVAL_TAG: u64 = 0x6576_616c;
const SAA_TAG: u64 = 0x0073_6161;
const VC_TAG: u64 = 0x7661_7263;

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub kind: String,
    pub name: String,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub results: Vec<SeedResult>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad manifest {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// Human-readable summary table.
    pub report: String,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

/// Loads, validates and runs a config file.
pub fn run(config_path: &Path, options: &RunOptions) -> Result<RunOutcome> {
    run_config(ExperimentConfig::load(config_path)?, options)
}

pub fn run_config(mut config: ExperimentConfig, options: &RunOptions) -> Result<RunOutcome> {
    if let Some(seed) = options.seed {
        config.seeds = vec![seed];
    }
    if let Some(dir) = &options.output_dir {
        config.output_dir = Some(dir.clone());
    }
    config.validate()?;
    let dir = config.output_dir.clone().unwrap_or_else(|| {
        let name = if config.name.is_empty() {
            config.experiment.name()
        } else {
            &config.name
        };
        PathBuf::from("runs").join(name)
    });
    std::fs::create_dir_all(&dir)?;
    let canonical = config.canonical_json()?;
    std::fs::write(dir.join("config.json"), &canonical)?;
    let hash = Sha256::digest(canonical.as_bytes());
    let config_sha256: String = hash.iter().map(|b| format!("{b:02x}")).collect();

    let built = config.model.build()?;
    let mut report = String::new();
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let r = run_seed(&config, &built, seed, &dir, &mut report)?;
        results.push(r);
    }
    // Where a run was written is not part of what it is.
    let mut recorded = config.clone();
    recorded.output_dir = None;
    let manifest = Manifest {
        schema_version: config.schema_version,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: config.experiment.name().to_string(),
        name: config.name.clone(),
        alpha: config.alpha,
        seeds: config.seeds.clone(),
        config_sha256,
        passed: results.iter().all(|r| r.passed),
        config: recorded,
        results,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(RunOutcome { dir, manifest, report })
}

fn run_seed(
    config: &ExperimentConfig,
    built: &BuiltModel,
    seed: u64,
    dir: &Path,
    report: &mut String,
) -> Result<SeedResult> {
    let model = built.model();
    let alpha = config.alpha;
    match &config.experiment {
        ExperimentKind::Train(spec) => train_seed(config, built, spec, seed, dir, report),
        ExperimentKind::BiasStudy {
            theta,
            batch_sizes,
            replications,
        } => {
            let theta = ParamVector::new(theta.clone())?;
            let truth = known_gradient(built, &theta, alpha)?;
            let rows = bias_study(model, &theta, &truth, alpha, batch_sizes, *replications, seed)?;
            let name = format!("bias_seed{seed}.csv");
            let mut w = CsvWriter::create(&dir.join(&name))?;
            let mut header = vec!["batch_size".to_string(), "mean_abs_bias".into()];
            header.extend((0..truth.len()).map(|j| format!("mean_estimate_{j}")));
            w.row(&header)?;
            let _ = writeln!(report, "seed {seed}: batch_size  mean_abs_bias");
            for r in &rows {
                let mut line = vec![r.n.to_string(), num(r.mean_abs_bias)];
                line.extend(r.mean_estimate.iter().map(|v| num(*v)));
                w.row(&line)?;
                let _ = writeln!(report, "  {:>10}  {:.6e}", r.n, r.mean_abs_bias);
            }
            w.finish()?;
            let slope = loglog_slope(&rows);
            let _ = writeln!(report, "  log-log slope: {slope:?}");
            Ok(SeedResult {
                seed,
                artifacts: vec![name],
                passed: true,
                failure: None,
                summary: json!({ "truth": truth, "loglog_slope": slope }),
            })
        }
        ExperimentKind::VarianceComparison {
            theta,
            n,
            replications,
            saa,
        } => {
            let theta = ParamVector::new(theta.clone())?;
            let proposal = built.proposal()?;
            let fit = fit_proposal_saa(model, proposal.as_ref(), &theta, alpha, saa, derive_seed(seed, SAA_TAG))?;
            let vc = variance_comparison(
                model,
                proposal.as_ref(),
                &theta,
                alpha,
                &fit.omega,
                *n,
                *replications,
                derive_seed(seed, VC_TAG),
            )?;
            let name = format!("variance_seed{seed}.csv");
            let mut w = CsvWriter::create(&dir.join(&name))?;
            w.row(&["component", "var_crude", "var_is", "ratio", "mean_crude", "mean_is"])?;
            let ratios = vc.ratios();
            let _ = writeln!(report, "seed {seed}: omega = {:?}", fit.omega);
            for j in 0..ratios.len() {
                w.row(&[
                    j.to_string(),
                    num(vc.var_crude[j]),
                    num(vc.var_is[j]),
                    num(ratios[j]),
                    num(vc.mean_crude[j]),
                    num(vc.mean_is[j]),
                ])?;
                let _ = writeln!(
                    report,
                    "  component {j}: var crude {:.4e}, var is {:.4e}, ratio {:.4}",
                    vc.var_crude[j], vc.var_is[j], ratios[j]
                );
            }
            w.finish()?;
            Ok(SeedResult {
                seed,
                artifacts: vec![name],
                passed: true,
                failure: None,
                summary: json!({
                    "omega": fit.omega,
                    "saa_initial_objective": fit.initial_objective,
                    "saa_final_objective": fit.final_objective,
                    "ratios": ratios,
                }),
            })
        }
        ExperimentKind::Evaluate {
            theta,
            n_eval,
            histogram,
        } => {
            let theta = ParamVector::new(theta.clone())?;
            let (name, summary) = evaluate_and_write(built, &theta, alpha, *n_eval, histogram, seed, dir)?;
            let _ = writeln!(report, "seed {seed}: {summary}");
            Ok(SeedResult {
                seed,
                artifacts: vec![name],
                passed: true,
                failure: None,
                summary,
            })
        }
        ExperimentKind::OracleCheck {
            theta,
            n,
            fd_step,
            rel_tol,
            abs_tol,
        } => {
            let theta = ParamVector::new(theta.clone())?;
            let truth = match built {
                BuiltModel::Chain(m) => fd_cvar_gradient(m, &theta, alpha, *fd_step)?.grad,
                _ => known_gradient(built, &theta, alpha)?,
            };
            let batch = sample_batch(model, &theta, *n, seed)?;
            let est = gcvar_estimate(&batch, alpha)?;
            let name = format!("oracle_seed{seed}.csv");
            let mut w = CsvWriter::create(&dir.join(&name))?;
            w.row(&["component", "estimate", "truth", "abs_error", "rel_error", "within_tolerance"])?;
            let _ = writeln!(report, "seed {seed}: component  estimate  truth  rel_error  ok");
            let mut all_ok = true;
            for (j, (e, t)) in est.grad.iter().zip(&truth).enumerate() {
                let abs = (e - t).abs();
                let rel = abs / t.abs();
                let ok = if t.abs() < *abs_tol { abs <= *abs_tol } else { rel <= *rel_tol };
                all_ok &= ok;
                w.row(&[j.to_string(), num(*e), num(*t), num(abs), num(rel), ok.to_string()])?;
                let _ = writeln!(report, "  {j:>9}  {e:+.6}  {t:+.6}  {rel:.4}  {ok}");
            }
            w.finish()?;
            Ok(SeedResult {
                seed,
                artifacts: vec![name],
                passed: all_ok,
                failure: None,
                summary: json!({ "estimate": est.grad, "truth": truth }),
            })
        }
    }
}

fn known_gradient(built: &BuiltModel, theta: &ParamVector, alpha: f64) -> Result<Vec<f64>> {
    match built {
        BuiltModel::Gaussian(_) => Ok(vec![gaussian_truth(theta[0], alpha)?.grad]),
        BuiltModel::Chain(m) => Ok(fd_cvar_gradient(m, theta, alpha, 1e-4)?.grad),
        _ => Err(Error::Config("no known gradient for this model".into())),
    }
}

fn feature_names(built: &BuiltModel) -> Vec<String> {
    match built {
        BuiltModel::Tetris(env) => env.config().features.iter().map(|f| f.name().to_string()).collect(),
        _ => (0..built.model().dim()).map(|j| format!("theta_{j}")).collect(),
    }
}

fn evaluate_and_write(
    built: &BuiltModel,
    theta: &ParamVector,
    alpha: f64,
    n_eval: usize,
    histogram: &Option<HistogramSpec>,
    seed: u64,
    dir: &Path,
) -> Result<(String, Value)> {
    let ev = evaluate_policy(built.model(), theta, alpha, n_eval, derive_seed(seed, EVAL_TAG))?;
    let hist = match histogram {
        Some(h) => Histogram::with_range(&ev.rewards, h.lo, h.hi, h.bins)?,
        None => ev.histogram.clone(),
    };
    let name = format!("histogram_seed{seed}.csv");
    let mut w = CsvWriter::create(&dir.join(&name))?;
    w.row(&["bin_lo", "bin_hi", "count"])?;
    for (b, c) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.bin_edges(b);
        w.row(&[num(lo), num(hi), c.to_string()])?;
    }
    w.finish()?;
    let mut summary = json!({
        "eval_mean": ev.mean,
        "eval_cvar": ev.cvar,
        "eval_var": ev.var,
        "n_eval": n_eval,
    });
    if let BuiltModel::Chain(m) = built {
        summary["exact_mean"] = json!(exact_mean(m, theta)?);
        summary["exact_cvar"] = json!(exact_cvar(m, theta, alpha)?);
    }
    Ok((name, summary))
}

fn trace_header(k: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "mean_return".into(), "cvar_return".into()];
    h.extend((0..k).map(|j| format!("theta_{j}")));
    h.extend(["var_used".into(), "tail_count".into(), "batch_size".into(), "omega".into()]);
    h
}

fn trace_row(r: &IterationRecord) -> Vec<String> {
    let mut row = vec![r.iteration.to_string(), num(r.mean_return), num(r.cvar_return)];
    row.extend(r.theta.iter().map(|t| num(*t)));
    row.push(num(r.var_used));
    row.push(r.tail_count.to_string());
    row.push(r.batch_size.to_string());
    row.push(match &r.omega {
        Some(w) => w.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "),
        None => String::new(),
    });
    row
}

/// Runs the optimizer writing one flushed CSV row per iteration.
fn traced_run(
    model: &dyn StochasticModel,
    estimator: Estimator<'_>,
    sgd: &SgdConfig,
    path: &Path,
) -> Result<(Vec<f64>, Option<String>, usize)> {
    let mut w = CsvWriter::create(path)?;
    w.row(&trace_header(model.dim()))?;
    w.flush()?;
    if sgd.iterations == 0 {
        w.finish()?;
        let theta = sgd.projection.project(&ParamVector::new(sgd.theta0.clone())?)?;
        return Ok((theta.into_vec(), None, 0));
    }
    let trace = cvarsgd_with_observer(model, estimator, sgd, |r| {
        w.row(&trace_row(r))?;
        w.flush()
    })?;
    w.finish()?;
    let failure = trace
        .failure
        .map(|f| format!("estimator failed at iteration {}: {}", f.iteration, f.message));
    Ok((trace.final_theta, failure, trace.records.len()))
}

fn train_seed(
    config: &ExperimentConfig,
    built: &BuiltModel,
    spec: &TrainSpec,
    seed: u64,
    dir: &Path,
    report: &mut String,
) -> Result<SeedResult> {
    let model = built.model();
    let k = model.dim();
    let projection = spec.projection.resolve(k)?;
    let mut theta0 = spec.theta0.clone().unwrap_or_else(|| vec![0.0; k]);
    let mut artifacts = Vec::new();
    let mut summary = json!({ "feature_names": feature_names(built) });

    if let Some(warm) = &spec.warm_start {
        let name = format!("warm_seed{seed}.csv");
        let sgd = SgdConfig {
            alpha: config.alpha,
            projection: projection.clone(),
            step: warm.step,
            batch: warm.batch,
            iterations: warm.iterations,
            seed: warm.seed.unwrap_or_else(|| derive_seed(seed, WARM_TAG)),
            theta0: theta0.clone(),
        };
        let (theta, failure, _) = traced_run(model, Estimator::PlainLr, &sgd, &dir.join(&name))?;
        artifacts.push(name);
        if let Some(f) = failure {
            return Ok(failed(seed, artifacts, summary, format!("warm start: {f}"), report));
        }
        theta0 = theta;
        summary["warm_theta"] = json!(theta0);
    }

    let proposal = match spec.estimator {
        super::config::EstimatorSpec::Is { .. } => Some(built.proposal()?),
        _ => None,
    };
    let estimator = spec.estimator.resolve(proposal.as_deref())?;
    let sgd = SgdConfig {
        alpha: config.alpha,
        projection,
        step: spec.step,
        batch: spec.batch.unwrap_or_else(|| BatchSchedule::default_for(config.alpha)),
        iterations: spec.iterations,
        seed,
        theta0,
    };
    let name = format!("train_seed{seed}.csv");
    let (final_theta, failure, done) = traced_run(model, estimator, &sgd, &dir.join(&name))?;
    artifacts.push(name);
    summary["iterations_completed"] = json!(done);
    summary["final_theta"] = json!(final_theta);
    let theta_name = format!("theta_seed{seed}.json");
    let dump = json!({
        "feature_names": feature_names(built),
        "final_theta": final_theta,
    });
    std::fs::write(dir.join(&theta_name), serde_json::to_string_pretty(&dump)? + "\n")?;
    artifacts.push(theta_name);
    if let Some(f) = failure {
        return Ok(failed(seed, artifacts, summary, f, report));
    }

    let (hist_name, eval) = evaluate_and_write(
        built,
        &ParamVector::new(final_theta.clone())?,
        config.alpha,
        spec.n_eval,
        &spec.histogram,
        seed,
        dir,
    )?;
    artifacts.push(hist_name);
    if let (Value::Object(s), Value::Object(e)) = (&mut summary, eval) {
        s.extend(e);
    }
    let _ = writeln!(
        report,
        "seed {seed}: eval mean {:.6}, eval cvar {:.6}, theta {:?}",
        summary["eval_mean"].as_f64().unwrap_or(f64::NAN),
        summary["eval_cvar"].as_f64().unwrap_or(f64::NAN),
        final_theta
    );
    Ok(SeedResult {
        seed,
        artifacts,
        passed: true,
        failure: None,
        summary,
    })
}

fn failed(seed: u64, artifacts: Vec<String>, summary: Value, message: String, report: &mut String) -> SeedResult {
    let _ = writeln!(report, "seed {seed}: FAILED: {message}");
    SeedResult {
        seed,
        artifacts,
        passed: false,
        failure: Some(message),
        summary,
    }
}

struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<()> {
        let line: Vec<&str> = cells.iter().map(|c| c.as_ref()).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        Ok(self.out.flush()?)
    }

    fn finish(mut self) -> Result<()> {
        self.flush()
    }
}

/// Final-evaluation comparison of two training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub mean_a: f64,
    pub cvar_a: f64,
    pub mean_b: f64,
    pub cvar_b: f64,
    /// `a − b`.
    pub mean_diff: f64,
    pub cvar_diff: f64,
    pub theta_diff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub rows: Vec<ComparisonRow>,
    pub mean_diff_avg: f64,
    pub cvar_diff_avg: f64,
}

fn seed_metrics(r: &SeedResult) -> Result<(f64, f64, Vec<f64>)> {
    let get = |key: &str| {
        r.summary[key]
            .as_f64()
            .ok_or_else(|| Error::Config(format!("seed {} has no {key}", r.seed)))
    };
    let theta: Vec<f64> = serde_json::from_value(r.summary["final_theta"].clone())
        .map_err(|_| Error::Config(format!("seed {} has no final_theta", r.seed)))?;
    Ok((get("eval_mean")?, get("eval_cvar")?, theta))
}

/// Compares the final evaluations of two completed training runs seed by
/// seed.
pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<Comparison> {
    let a = Manifest::load(dir_a)?;
    let b = Manifest::load(dir_b)?;
    for m in [&a, &b] {
        if m.kind != "train" {
            return Err(Error::Config(format!("run `{}` is a {} run, not train", m.name, m.kind)));
        }
    }
    if a.alpha != b.alpha {
        return Err(Error::Config(format!("alpha differs: {} vs {}", a.alpha, b.alpha)));
    }
    if a.seeds != b.seeds {
        return Err(Error::Config("the runs use different seeds".into()));
    }
    let mut rows = Vec::with_capacity(a.results.len());
    for (ra, rb) in a.results.iter().zip(&b.results) {
        let (mean_a, cvar_a, ta) = seed_metrics(ra)?;
        let (mean_b, cvar_b, tb) = seed_metrics(rb)?;
        if ta.len() != tb.len() {
            return Err(Error::Config("parameter dimensions differ".into()));
        }
        rows.push(ComparisonRow {
            seed: ra.seed,
            mean_a,
            cvar_a,
            mean_b,
            cvar_b,
            mean_diff: mean_a - mean_b,
            cvar_diff: cvar_a - cvar_b,
            theta_diff: ta.iter().zip(&tb).map(|(x, y)| x - y).collect(),
        });
    }
    let n = rows.len() as f64;
    Ok(Comparison {
        alpha: a.alpha,
        mean_diff_avg: rows.iter().map(|r| r.mean_diff).sum::<f64>() / n,
        cvar_diff_avg: rows.iter().map(|r| r.cvar_diff).sum::<f64>() / n,
        rows,
    })
}
