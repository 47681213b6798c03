//! Reference methods: proximal SGD, SAGA and proximal gradient descent.
//!
//! SAGA keeps its own gradient table and never calls into `nestt_g`, so agreement between
//! the two under matching parameters is a real cross-check.

use nalgebra::DVector;

use crate::error::{NesttError, Result};
use crate::problem::CompositeProblem;
use crate::prox::prox_h;
use crate::record::{drive, RunOptions, RunRecord, Stepper};
use crate::sampling::{Schedule, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeRule {
    Constant(f64),
    /// `c / sqrt(r)` at iteration `r >= 1`.
    InvSqrt(f64),
}

impl StepsizeRule {
    pub fn validate(&self) -> Result<()> {
        let c = match self {
            StepsizeRule::Constant(c) | StepsizeRule::InvSqrt(c) => *c,
        };
        if c > 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(NesttError::InvalidArgument(format!("stepsize constant must be positive, got {c}")))
        }
    }

    /// Stepsize used for the step producing iterate `r` (`r >= 1`).
    pub fn at(&self, r: u64) -> f64 {
        match self {
            StepsizeRule::Constant(c) => *c,
            StepsizeRule::InvSqrt(c) => c / (r.max(1) as f64).sqrt(),
        }
    }
}

fn g0_gradient(problem: &CompositeProblem, z: &DVector<f64>) -> Option<DVector<f64>> {
    problem.g0().map(|g| g.gradient(z))
}

fn check_start(problem: &CompositeProblem, z0: &DVector<f64>) -> Result<()> {
    if z0.len() != problem.dim() {
        return Err(NesttError::DimensionMismatch {
            expected: problem.dim(),
            got: z0.len(),
        });
    }
    Ok(())
}

fn record(name: &str, seed: u64, samples: Vec<crate::metrics::MetricSample>, final_z: DVector<f64>) -> RunRecord {
    RunRecord {
        run_id: format!("{name}-s{seed}"),
        algorithm: name.into(),
        sampling: String::new(),
        seed,
        fingerprint: String::new(),
        samples,
        final_z,
        output_index: None,
    }
}

#[derive(Debug, Clone)]
pub struct SgdState {
    z: DVector<f64>,
    rule: StepsizeRule,
    schedule: Schedule,
    grad_evals: u64,
    iter: u64,
}

impl SgdState {
    pub fn new(problem: &CompositeProblem, rule: StepsizeRule, z0: &DVector<f64>, schedule: &ScheduleSpec) -> Result<Self> {
        rule.validate()?;
        check_start(problem, z0)?;
        Ok(SgdState {
            z: z0.clone(),
            rule,
            schedule: Schedule::new(schedule, problem.n())?,
            grad_evals: 0,
            iter: 0,
        })
    }

    /// `(1/(N p_i)) grad g_i(z) + grad g_0(z)`; a cyclic schedule uses `p_i = 1/N`.
    pub fn estimator(&self, problem: &CompositeProblem, i: usize) -> Result<DVector<f64>> {
        sgd_estimator(problem, &self.z, i, self.schedule.probabilities()[i])
    }

    pub fn step_at(&mut self, problem: &CompositeProblem, i: usize) -> Result<()> {
        let gamma = self.rule.at(self.iter + 1);
        let g = self.estimator(problem, i)?;
        self.grad_evals += 1;
        self.z = prox_h(problem.h(), &(&self.z - g * gamma), 1.0 / gamma);
        self.iter += 1;
        Ok(())
    }
}

/// Single-component unbiased estimator of the smooth gradient.
pub fn sgd_estimator(problem: &CompositeProblem, z: &DVector<f64>, i: usize, p_i: f64) -> Result<DVector<f64>> {
    let mut g = problem.grad_component(i, z)? / (problem.n() as f64 * p_i);
    if let Some(g0) = g0_gradient(problem, z) {
        g += g0;
    }
    Ok(g)
}

impl Stepper for SgdState {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()> {
        let i = self.schedule.next_index();
        self.step_at(problem, i)
    }

    fn iter(&self) -> u64 {
        self.iter
    }

    fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    fn z(&self) -> &DVector<f64> {
        &self.z
    }

    fn default_gap_beta(&self) -> f64 {
        self.rule.at(1)
    }

    fn diagnostics(&self, _: &CompositeProblem) -> Result<(Option<f64>, Option<f64>)> {
        Ok((None, None))
    }
}

pub fn prox_sgd_run(
    problem: &CompositeProblem,
    rule: StepsizeRule,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
    iters: u64,
    opts: RunOptions,
) -> Result<RunRecord> {
    let mut state = SgdState::new(problem, rule, z0, schedule)?;
    let (samples, final_z) = drive(problem, &mut state, iters, opts)?;
    Ok(record("sgd", schedule.seed, samples, final_z))
}

/// `1 / (3 L_max N^(2/3))`.
pub fn saga_stepsize(lipschitz: &[f64]) -> f64 {
    let l_max = lipschitz.iter().cloned().fold(0.0, f64::max);
    1.0 / (3.0 * l_max * (lipschitz.len() as f64).powf(2.0 / 3.0))
}

#[derive(Debug, Clone)]
pub struct SagaState {
    z: DVector<f64>,
    table: Vec<DVector<f64>>,
    beta: f64,
    schedule: Schedule,
    grad_evals: u64,
    iter: u64,
}

impl SagaState {
    /// Fills the table at `z0` (`N` evaluations).
    pub fn new(problem: &CompositeProblem, beta: f64, z0: &DVector<f64>, schedule: &ScheduleSpec) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(NesttError::InvalidArgument(format!("stepsize must be positive, got {beta}")));
        }
        check_start(problem, z0)?;
        let table = (0..problem.n())
            .map(|i| problem.grad_component(i, z0))
            .collect::<Result<Vec<_>>>()?;
        Ok(SagaState {
            z: z0.clone(),
            table,
            beta,
            schedule: Schedule::new(schedule, problem.n())?,
            grad_evals: problem.n() as u64,
            iter: 0,
        })
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn table(&self) -> &[DVector<f64>] {
        &self.table
    }

    pub fn step_at(&mut self, problem: &CompositeProblem, i: usize) -> Result<()> {
        let n = problem.n() as f64;
        let p_i = self.schedule.probabilities()[i];
        let fresh = problem.grad_component(i, &self.z)?;
        self.grad_evals += 1;
        let mean = self
            .table
            .iter()
            .fold(DVector::zeros(self.z.len()), |acc, g| acc + g)
            / n;
        let mut direction = (&fresh - &self.table[i]) / (n * p_i) + mean;
        if let Some(g0) = g0_gradient(problem, &self.z) {
            direction += g0;
        }
        self.z = prox_h(problem.h(), &(&self.z - direction * self.beta), 1.0 / self.beta);
        self.table[i] = fresh;
        self.iter += 1;
        Ok(())
    }
}

impl Stepper for SagaState {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()> {
        let i = self.schedule.next_index();
        self.step_at(problem, i)
    }

    fn iter(&self) -> u64 {
        self.iter
    }

    fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    fn z(&self) -> &DVector<f64> {
        &self.z
    }

    fn default_gap_beta(&self) -> f64 {
        self.beta
    }

    fn diagnostics(&self, _: &CompositeProblem) -> Result<(Option<f64>, Option<f64>)> {
        Ok((None, None))
    }
}

pub fn saga_run_with_stepsize(
    problem: &CompositeProblem,
    beta: f64,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
    iters: u64,
    opts: RunOptions,
) -> Result<RunRecord> {
    let mut state = SagaState::new(problem, beta, z0, schedule)?;
    let (samples, final_z) = drive(problem, &mut state, iters, opts)?;
    Ok(record("saga", schedule.seed, samples, final_z))
}

/// SAGA with the stepsize [`saga_stepsize`].
pub fn saga_run(
    problem: &CompositeProblem,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
    iters: u64,
    opts: RunOptions,
) -> Result<RunRecord> {
    saga_run_with_stepsize(problem, saga_stepsize(&problem.lipschitz()), z0, schedule, iters, opts)
}

#[derive(Debug, Clone)]
pub struct ProxGdState {
    z: DVector<f64>,
    gamma: f64,
    grad_evals: u64,
    iter: u64,
}

impl ProxGdState {
    /// Stepsize `1 / (sum L_i / N + L_0)`.
    pub fn new(problem: &CompositeProblem, z0: &DVector<f64>) -> Result<Self> {
        check_start(problem, z0)?;
        let l = problem.lipschitz();
        let smooth = l.iter().sum::<f64>() / l.len() as f64 + problem.l0();
        if !(smooth > 0.0) {
            return Err(NesttError::InvalidArgument("smooth part has zero Lipschitz constant".into()));
        }
        Ok(ProxGdState {
            z: z0.clone(),
            gamma: 1.0 / smooth,
            grad_evals: 0,
            iter: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Stepper for ProxGdState {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()> {
        let grad = problem.full_gradient(&self.z)?;
        self.grad_evals += problem.n() as u64;
        self.z = prox_h(problem.h(), &(&self.z - grad * self.gamma), 1.0 / self.gamma);
        self.iter += 1;
        Ok(())
    }

    fn iter(&self) -> u64 {
        self.iter
    }

    fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    fn z(&self) -> &DVector<f64> {
        &self.z
    }

    fn default_gap_beta(&self) -> f64 {
        self.gamma
    }

    fn diagnostics(&self, _: &CompositeProblem) -> Result<(Option<f64>, Option<f64>)> {
        Ok((None, None))
    }
}

pub fn prox_gd_run(problem: &CompositeProblem, z0: &DVector<f64>, iters: u64, opts: RunOptions) -> Result<RunRecord> {
    let mut state = ProxGdState::new(problem, z0)?;
    let (samples, final_z) = drive(problem, &mut state, iters, opts)?;
    Ok(record("prox_gd", 0, samples, final_z))
}
