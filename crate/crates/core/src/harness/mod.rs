//! Configuration-driven experiment runner.

pub mod config;
pub mod io;
pub mod summary;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

pub use config::{AlgoConfig, Algorithm, ExperimentConfig, ProblemSource};
pub use summary::{render_summary, summarize, write_summary_csv, SummaryRow};

use crate::baselines::{prox_gd_run, prox_sgd_run, saga_run, StepsizeRule};
use crate::error::{NesttError, Result};
use crate::nestt_e::run_e;
use crate::nestt_g::run_g;
use crate::problem::{generate_regression_instance, read_problem, write_problem};
use crate::problem::CompositeProblem;
use crate::record::{RunOptions, RunRecord};
use crate::sampling::{nestt_e_eta_threshold, nestt_g_parameters, nestt_g_parameters_with, NesttParams, Sampling};

pub const THREADS_ENV: &str = "NESTT_THREADS";

pub fn load_problem(source: &ProblemSource) -> Result<CompositeProblem> {
    match source {
        ProblemSource::Generate(cfg) => generate_regression_instance(cfg).map(|(p, _)| p),
        ProblemSource::File(path) => read_problem(BufReader::new(File::open(path)?)),
    }
}

/// Exact-variant parameters used by the runner: penalties `eta_i = safety * threshold_i`
/// computed at the base `alpha_i = 1`, then `alpha_i = alpha_scale` with `eta` held fixed,
/// and `p` from the sampling rule.
///
/// The threshold decreases in `alpha`, so scaling `alpha` up keeps every `c_i < 0`.
pub fn nestt_e_runner_params(lipschitz: &[f64], alpha_scale: f64, safety: f64, sampling: Sampling) -> Result<NesttParams> {
    let n = lipschitz.len();
    let eta = lipschitz
        .iter()
        .map(|l| safety * nestt_e_eta_threshold(1.0, *l, n))
        .collect();
    NesttParams::new(vec![alpha_scale; n], sampling.probabilities(lipschitz), eta)
}

/// Runs one configured method for one seed from `z = 0`.
///
/// Every method's gap is measured with the same weight `beta`, the square-root-sampling
/// value, so gap columns are comparable across methods.
pub fn run_algorithm(problem: &CompositeProblem, algo: &AlgoConfig, seed: u64, stride_passes: f64) -> Result<RunRecord> {
    let n = problem.n();
    let lipschitz = problem.lipschitz();
    let z0 = DVector::zeros(problem.dim());
    let iters = algo.passes * n as u64;
    let reference_beta = nestt_g_parameters(&lipschitz)?.beta;
    let opts = RunOptions {
        stride: Some(((stride_passes * n as f64).round() as u64).max(1)),
        gap_beta: Some(reference_beta),
    };
    let schedule = algo.sampling.schedule(&lipschitz, seed);
    let mut record = match algo.algorithm {
        Algorithm::NesttG => {
            let params = nestt_g_parameters_with(&lipschitz, &algo.sampling.probabilities(&lipschitz))?;
            run_g(problem, &params, &z0, &schedule, iters, opts)?
        }
        Algorithm::NesttE => {
            let params = nestt_e_runner_params(&lipschitz, algo.alpha_scale, algo.safety, algo.sampling)?;
            run_e(problem, &params, &z0, &schedule, iters, opts)?
        }
        Algorithm::Sgd => {
            let rule = algo.stepsize.unwrap_or(StepsizeRule::InvSqrt(0.1 * reference_beta));
            prox_sgd_run(problem, rule, &z0, &schedule, iters, opts)?
        }
        Algorithm::Saga => saga_run(problem, &z0, &schedule, iters, opts)?,
        // A pass of full-gradient descent costs N evaluations.
        Algorithm::ProxGd => prox_gd_run(problem, &z0, algo.passes, RunOptions {
            stride: Some(((stride_passes).round() as u64).max(1)),
            ..opts
        })?,
    };
    record.algorithm = algo.display_name();
    record.sampling = algo.sampling.name().to_string();
    record.seed = seed;
    Ok(record)
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Runs every (method, seed) pair, writing `runs/<run_id>.csv` per run and `combined.csv`
/// under the output directory. Records come back in configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let problem = load_problem(&cfg.problem)?;
    let fingerprint = cfg.fingerprint();
    let jobs: Vec<(usize, &AlgoConfig, u64)> = cfg
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(k, a)| a.seeds.iter().map(move |s| (k, a, *s)))
        .collect();

    let work = || {
        jobs.par_iter()
            .map(|(k, algo, seed)| {
                let mut r = run_algorithm(&problem, algo, *seed, cfg.record_stride_passes)?;
                r.run_id = format!("{k}-{}-{}-s{seed}", algo.algorithm.name(), algo.sampling.name());
                r.fingerprint = fingerprint.clone();
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    };
    let records = match thread_count() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| NesttError::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let runs_dir = cfg.output_dir.join("runs");
    if runs_dir.exists() {
        for entry in fs::read_dir(&runs_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "csv" || x == "meta") {
                fs::remove_file(path)?;
            }
        }
    }
    for r in &records {
        io::write_run(&runs_dir, r)?;
    }
    io::write_csv(&records, File::create(cfg.output_dir.join("combined.csv"))?)?;
    Ok(records)
}

/// Reads runs from `dir/runs` (or `dir` itself), writes `summary.txt` and `summary.csv`
/// into `dir`, and returns the rendered table.
pub fn summarize_dir(dir: &Path) -> Result<String> {
    let runs_dir = dir.join("runs");
    let source = if runs_dir.is_dir() { runs_dir } else { dir.to_path_buf() };
    let records = io::read_runs_dir(&source)?;
    let rows = summarize(&records)?;
    let text = render_summary(&rows);
    fs::write(dir.join("summary.txt"), &text)?;
    write_summary_csv(&rows, File::create(dir.join("summary.csv"))?)?;
    Ok(text)
}

/// Generates (or loads) the configured instance and saves it in the text format.
pub fn gen_instance(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let problem = load_problem(&cfg.problem)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_problem(&problem, std::io::BufWriter::new(File::create(out)?))
}
