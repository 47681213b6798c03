//! Run records and the shared iterate/record loop.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{NesttError, Result};
use crate::metrics::MetricSample;
use crate::problem::CompositeProblem;

/// Ordered metric samples of one run plus enough identity to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub algorithm: String,
    pub sampling: String,
    pub seed: u64,
    /// Hash of the canonicalized experiment config; empty for library-level runs.
    pub fingerprint: String,
    pub samples: Vec<MetricSample>,
    pub final_z: DVector<f64>,
    /// Uniformly drawn output iteration in `1..=iters`, for methods that report one.
    pub output_index: Option<u64>,
}

impl RunRecord {
    pub fn final_sample(&self) -> Option<&MetricSample> {
        self.samples.last()
    }

    pub fn final_gap(&self) -> f64 {
        self.final_sample().map_or(f64::NAN, |s| s.gap)
    }

    /// Gradient evaluations at the first recorded sample whose gap is at most `threshold`.
    pub fn evals_to_gap(&self, threshold: f64) -> Option<u64> {
        self.samples
            .iter()
            .find(|s| s.gap <= threshold)
            .map(|s| s.grad_evals)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Iterations between samples; `None` records once per pass (every `N` iterations).
    pub stride: Option<u64>,
    /// Weight `beta` of the recorded prox-gradient gap; `None` uses the method's own.
    pub gap_beta: Option<f64>,
}

impl RunOptions {
    pub fn every(stride: u64) -> Self {
        RunOptions {
            stride: Some(stride),
            ..Self::default()
        }
    }
}

/// One iteration-at-a-time algorithm whose state can be instrumented.
pub trait Stepper {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()>;
    fn iter(&self) -> u64;
    fn grad_evals(&self) -> u64;
    fn z(&self) -> &DVector<f64>;
    /// The gap weight used when the caller does not fix one.
    fn default_gap_beta(&self) -> f64;
    /// Method-specific potential and consensus violation (uncounted work).
    fn diagnostics(&self, problem: &CompositeProblem) -> Result<(Option<f64>, Option<f64>)>;
}

pub(crate) fn sample<S: Stepper>(
    problem: &CompositeProblem,
    stepper: &S,
    gap_beta: f64,
    started: Instant,
) -> Result<MetricSample> {
    let (potential, consensus_violation) = stepper.diagnostics(problem)?;
    Ok(MetricSample {
        iter: stepper.iter(),
        passes: stepper.grad_evals() as f64 / problem.n() as f64,
        grad_evals: stepper.grad_evals(),
        gap: crate::metrics::prox_gradient_gap(problem, stepper.z(), gap_beta)?,
        potential,
        consensus_violation,
        wallclock_ns: started.elapsed().as_nanos() as u64,
    })
}

/// Runs `iters` steps, sampling at iteration 0, every stride, and at the end.
pub(crate) fn drive<S: Stepper>(
    problem: &CompositeProblem,
    stepper: &mut S,
    iters: u64,
    opts: RunOptions,
) -> Result<(Vec<MetricSample>, DVector<f64>)> {
    if iters == 0 {
        return Err(NesttError::InvalidArgument("iters must be at least 1".into()));
    }
    let stride = opts.stride.unwrap_or(problem.n() as u64).max(1);
    let gap_beta = opts.gap_beta.unwrap_or_else(|| stepper.default_gap_beta());
    let started = Instant::now();
    let mut samples = vec![sample(problem, stepper, gap_beta, started)?];
    for k in 1..=iters {
        stepper.step(problem)?;
        if k % stride == 0 || k == iters {
            samples.push(sample(problem, stepper, gap_beta, started)?);
        }
    }
    Ok((samples, stepper.z().clone()))
}
