//! Stationarity measures and potentials, computed without touching algorithm counters.

use nalgebra::DVector;

use crate::error::{NesttError, Result};
use crate::nestt_e::EState;
use crate::nestt_g::GState;
use crate::problem::CompositeProblem;
use crate::prox::prox_h;
use crate::sampling::NesttParams;

/// One instrumentation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub iter: u64,
    /// `grad_evals / N`.
    pub passes: f64,
    pub grad_evals: u64,
    /// Squared prox-gradient norm at the current iterate.
    pub gap: f64,
    /// Potential `Q` (gradient variant) or augmented Lagrangian (exact variant).
    pub potential: Option<f64>,
    pub consensus_violation: Option<f64>,
    pub wallclock_ns: u64,
}

/// `||(1/beta) (z - prox_h^{1/beta}[z - beta grad(g + g_0)(z)])||^2`.
pub fn prox_gradient_gap(problem: &CompositeProblem, z: &DVector<f64>, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(NesttError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let grad = problem.full_gradient(z)?;
    let projected = prox_h(problem.h(), &(z - grad * beta), 1.0 / beta);
    Ok((z - projected).norm_squared() / (beta * beta))
}

/// Potential for the gradient variant, with `table[i]` standing in for `grad g_i(y_i)`:
///
/// `Q = (1/N) sum g_i(z) + sum_i 3 p_i / (alpha_i^2 eta_i) ||(1/N)(grad g_i(z) - table_i)||^2
///      + g_0(z) + h(z)`.
pub fn potential_q_parts(
    problem: &CompositeProblem,
    params: &NesttParams,
    z: &DVector<f64>,
    table: &[DVector<f64>],
) -> Result<f64> {
    let n = problem.n() as f64;
    let mut memory = 0.0;
    for (i, row) in table.iter().enumerate() {
        let diff = (problem.grad_component(i, z)? - row) / n;
        let weight = 3.0 * params.p[i] / (params.alpha[i].powi(2) * params.eta[i]);
        memory += weight * diff.norm_squared();
    }
    Ok(problem.objective(z)? + memory)
}

pub fn potential_q(problem: &CompositeProblem, state: &GState) -> Result<f64> {
    potential_q_parts(problem, state.params(), state.z(), state.grad_table())
}

/// `sum_i [ (1/N) g_i(x_i) + <lambda_i, x_i - z> + (eta_i/2) ||x_i - z||^2 ] + g_0(z) + h(z)`.
pub fn augmented_lagrangian(
    problem: &CompositeProblem,
    x: &[DVector<f64>],
    z: &DVector<f64>,
    lambda: &[DVector<f64>],
    eta: &[f64],
) -> Result<f64> {
    let n = problem.n();
    if x.len() != n || lambda.len() != n || eta.len() != n {
        return Err(NesttError::DimensionMismatch {
            expected: n,
            got: x.len().min(lambda.len()).min(eta.len()),
        });
    }
    let nf = n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let offset = &x[i] - z;
        total += problem.eval_component(i, &x[i])? / nf
            + lambda[i].dot(&offset)
            + 0.5 * eta[i] * offset.norm_squared();
    }
    let g0 = problem.g0().map_or(0.0, |g| g.value(z));
    Ok(total + g0 + problem.h().value(z))
}

/// Optimality gap of the exact variant:
/// `H(w) = ||z - prox_h[z - grad_z(L - h)]||^2 + sum_i ||grad_{x_i} L||^2
///         + sum_i (L_i^2 / N^2) ||x_i - z||^2`.
pub fn gap_h_parts(
    problem: &CompositeProblem,
    x: &[DVector<f64>],
    z: &DVector<f64>,
    lambda: &[DVector<f64>],
    eta: &[f64],
) -> Result<f64> {
    let n = problem.n();
    let nf = n as f64;
    let lipschitz = problem.lipschitz();

    let mut grad_z = problem
        .g0()
        .map_or_else(|| DVector::zeros(problem.dim()), |g| g.gradient(z));
    let mut total = 0.0;
    for i in 0..n {
        let offset = &x[i] - z;
        grad_z -= &lambda[i] + &offset * eta[i];
        let grad_x = problem.grad_component(i, &x[i])? / nf + &lambda[i] + &offset * eta[i];
        total += grad_x.norm_squared() + (lipschitz[i] / nf).powi(2) * offset.norm_squared();
    }
    let projected = prox_h(problem.h(), &(z - grad_z), 1.0);
    Ok(total + (z - projected).norm_squared())
}

pub fn gap_h(problem: &CompositeProblem, state: &EState) -> Result<f64> {
    gap_h_parts(problem, state.x(), state.z(), state.lambda(), &state.params().eta)
}

/// Tail statistics of a sequence approaching `limit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Geometric mean of successive error ratios.
    pub rho_hat: f64,
    /// Coefficient of determination of a linear fit to `log |s_r - limit|`.
    pub r2: f64,
    pub usable_ratios: usize,
}

const TAIL_FLOOR: f64 = 1e-14;

/// Estimates the Q-linear rate over the last `tail_fraction` of `series`.
///
/// Errors `|s_r - limit|` below `1e-14` are treated as converged and skipped.
pub fn qlinear_tail_ratio(series: &[f64], limit: f64, tail_fraction: f64) -> Result<TailFit> {
    if series.len() < 20 {
        return Err(NesttError::InvalidArgument(format!(
            "need at least 20 points, got {}",
            series.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(NesttError::InvalidArgument(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let start = ((series.len() as f64) * (1.0 - tail_fraction)).floor() as usize;
    let errors: Vec<f64> = series[start..].iter().map(|s| (s - limit).abs()).collect();

    let log_ratios: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] >= TAIL_FLOOR && w[1] >= TAIL_FLOOR)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    if log_ratios.len() < 5 {
        return Err(NesttError::InvalidArgument(format!(
            "only {} usable ratios in the tail",
            log_ratios.len()
        )));
    }
    let rho_hat = (log_ratios.iter().sum::<f64>() / log_ratios.len() as f64).exp();

    let points: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| **e >= TAIL_FLOOR)
        .map(|(k, e)| (k as f64, e.ln()))
        .collect();
    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };

    Ok(TailFit {
        rho_hat,
        r2,
        usable_ratios: log_ratios.len(),
    })
}
