//! The `run` command: every (variant, seed) pair of a config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nashpl::diagnostics::{fit_rate, fit_trace, RateFit};
use nashpl::game::sum_f;
use nashpl::solvers::run;
use nashpl::{BlockVector, ProblemSpec, RunResult, RunStatus, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{write_json, write_sum_f_csv, write_trace_csv};
use crate::{HarnessError, Result};

/// Start points come from this ChaCha stream of the run seed; block
/// choices use stream 0.
pub const START_STREAM: u64 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub status: RunStatus,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub final_residual: f64,
    pub final_sum_f: f64,
    /// Classification of the gap column; absent for traces under 3 records.
    pub rate_fit: Option<RateFit>,
    /// Classification of `Σ_i f_i`.
    pub sum_f_fit: Option<RateFit>,
    pub case_histogram: BTreeMap<String, usize>,
    pub csv: PathBuf,
    pub sum_f_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub config: String,
    pub runs: Vec<RunSummary>,
}

/// Uniform draw from the test box with finite objectives.
pub fn start_point(spec: &ProblemSpec, seed: u64) -> Result<BlockVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(START_STREAM);
    for _ in 0..10_000 {
        let x = spec.point(spec.test_box.sample(&mut rng))?;
        if sum_f(spec.game.as_ref(), &x).is_finite() {
            return Ok(x);
        }
    }
    Err(HarnessError::Config(format!("no start point with finite objectives in the test box of {}", spec.name)))
}

pub fn trace_path(dir: &Path, problem: &str, variant: Variant, seed: u64) -> PathBuf {
    dir.join(format!("{problem}_{variant}_seed{seed}.csv"))
}

fn case_histogram(r: &RunResult) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for rec in r.trace.iter().skip(1) {
        *h.entry(rec.tag.map_or("untagged", |t| t.name()).to_string()).or_default() += 1;
    }
    h
}

fn execute(spec: &ProblemSpec, cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<RunSummary> {
    let x0 = match &cfg.x0 {
        Some(v) => spec.point(v.clone())?,
        None => start_point(spec, seed)?,
    };
    let r = run(spec.game.as_ref(), &x0, &cfg.solver.solver_config(variant, seed))?;
    let csv = trace_path(&cfg.output_dir, &cfg.problem.name, variant, seed);
    write_trace_csv(&csv, &r.trace)?;
    let sum_f_csv = if cfg.write_sum_f {
        let path = csv.with_file_name(format!("{}_{variant}_seed{seed}_sum_f.csv", cfg.problem.name));
        write_sum_f_csv(&path, &r.trace)?;
        Some(path)
    } else {
        None
    };
    let last = r.trace.last().expect("trace holds the start record");
    Ok(RunSummary {
        variant,
        seed,
        status: r.status,
        steps: last.iter,
        x0: x0.into_vec(),
        initial_gap: r.trace[0].gap,
        final_gap: last.gap,
        final_residual: r.final_residual,
        final_sum_f: last.sum_f,
        rate_fit: fit_trace(&r.trace).ok(),
        sum_f_fit: fit_rate(&r.trace.iter().map(|x| x.sum_f).collect::<Vec<_>>()).ok(),
        case_histogram: case_histogram(&r),
        csv,
        sum_f_csv,
    })
}

/// Runs every (variant, seed) pair in parallel, writing one CSV per run and
/// `summary.json` into the output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let spec = cfg.problem.build()?;
    if let Some(x0) = &cfg.x0 {
        let dim = spec.game.layout().total_dim();
        if x0.len() != dim {
            return Err(HarnessError::Config(format!("start.x0 has {} entries, {} needs {dim}", x0.len(), spec.name)));
        }
    }
    if cfg.variants.contains(&Variant::IaRbcd) && !spec.game.has_best_response() {
        return Err(HarnessError::Config(format!("ia_rbcd needs exact best responses, which {} lacks", spec.name)));
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let jobs: Vec<(Variant, u64)> = cfg.variants.iter().flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let runs = jobs.par_iter().map(|&(v, s)| execute(&spec, cfg, v, s)).collect::<Result<Vec<_>>>()?;
    let report = RunReport { problem: cfg.problem.name.clone(), config: cfg.to_string(), runs };
    write_json(&cfg.output_dir.join("summary.json"), &report)?;
    Ok(report)
}
