//! Proximal operators of the supported nonsmooth terms and the `z`-subproblem shared by the
//! splitting algorithms.
//!
//! Convention: `prox_h^gamma[c] = argmin_v h(v) + (gamma / 2) ||v - c||^2`.

use std::cmp::Ordering;

use nalgebra::DVector;

use crate::error::{NesttError, Result};
use crate::problem::{CompositeProblem, NonsmoothSpec};

pub const Z_SUBPROBLEM_TOL: f64 = 1e-10;
const Z_SUBPROBLEM_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct ProxRequest<'a> {
    h: &'a NonsmoothSpec,
    center: &'a DVector<f64>,
    gamma: f64,
}

impl<'a> ProxRequest<'a> {
    pub fn new(h: &'a NonsmoothSpec, center: &'a DVector<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(NesttError::InvalidArgument(format!(
                "prox weight must be positive, got {gamma}"
            )));
        }
        Ok(ProxRequest { h, center, gamma })
    }

    pub fn solve(&self) -> DVector<f64> {
        prox_h(self.h, self.center, self.gamma)
    }
}

/// Proximal map of `h` with weight `gamma > 0` at `center`.
pub fn prox_h(h: &NonsmoothSpec, center: &DVector<f64>, gamma: f64) -> DVector<f64> {
    debug_assert!(gamma > 0.0);
    match h {
        NonsmoothSpec::Zero => center.clone(),
        NonsmoothSpec::L1Penalty { mu } => soft_threshold(center, mu / gamma),
        NonsmoothSpec::L1Ball { radius } => project_l1_ball(center, *radius),
        NonsmoothSpec::Box { lo, hi } => center.zip_zip_map(lo, hi, |c, l, u| c.clamp(l, u)),
    }
}

pub fn soft_threshold(v: &DVector<f64>, threshold: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - threshold).max(0.0))
}

/// Euclidean projection onto `{v : ||v||_1 <= radius}` by sorting magnitudes and finding the
/// soft-threshold level that lands exactly on the sphere.
pub fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    soft_threshold(v, theta)
}

/// Solves `argmin_z h(z) + g_0(z) + 1/(2 beta) ||z - u||^2`.
///
/// Without `g_0` this is a single prox evaluation. Otherwise the fixed point
/// `z = prox_h^{1/beta}[u - beta grad g_0(z)]` is found by iterating the map, which contracts
/// with factor `beta L_0 < 1/3`, until successive iterates agree to `tol` relative to
/// `max(1, ||z||)`.
pub fn solve_z_subproblem(
    problem: &CompositeProblem,
    u: &DVector<f64>,
    beta: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    if !(beta > 0.0) {
        return Err(NesttError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if u.len() != problem.dim() {
        return Err(NesttError::DimensionMismatch {
            expected: problem.dim(),
            got: u.len(),
        });
    }
    let gamma = 1.0 / beta;
    let Some(g0) = problem.g0() else {
        return Ok(prox_h(problem.h(), u, gamma));
    };
    if gamma <= 3.0 * g0.lipschitz() {
        return Err(NesttError::InvalidParameters(format!(
            "z-subproblem requires 1/beta > 3 L0 (1/beta = {gamma}, L0 = {})",
            g0.lipschitz()
        )));
    }

    let mut z = prox_h(problem.h(), u, gamma);
    let mut residual = f64::INFINITY;
    for _ in 0..Z_SUBPROBLEM_MAX_ITERS {
        let next = prox_h(problem.h(), &(u - beta * g0.gradient(&z)), gamma);
        residual = (&next - &z).norm() / next.norm().max(1.0);
        z = next;
        if residual <= tol {
            return Ok(z);
        }
    }
    Err(NesttError::Convergence {
        iterations: Z_SUBPROBLEM_MAX_ITERS,
        residual,
    })
}
