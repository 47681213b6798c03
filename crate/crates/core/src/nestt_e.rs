//! NESTT-E: randomized primal-dual splitting with exact local minimization.
//!
//! Every iteration first minimizes the augmented Lagrangian in `z`, then one randomly picked
//! agent minimizes its local model `U_i` exactly and takes a dual ascent step. Unpicked local
//! copies persist between selections.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NesttError, Result};
use crate::metrics;
use crate::problem::{CompositeProblem, SmoothComponent};
use crate::prox::{solve_z_subproblem, Z_SUBPROBLEM_TOL};
use crate::record::{drive, RunOptions, RunRecord, Stepper};
use crate::sampling::{NesttParams, Schedule, ScheduleSpec};

pub const LOCAL_SOLVE_TOL: f64 = 1e-10;
const LOCAL_SOLVE_MAX_ITERS: usize = 10_000;
const OUTPUT_INDEX_SALT: u64 = 0x2545_f491_4f6c_dd1d;

/// Constants governing the sublinear rate of the exact variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EConstants {
    pub c: Vec<f64>,
    /// `gamma_i = eta_i - L_i / N`.
    pub gamma: Vec<f64>,
    /// `sum eta_i - L_0`.
    pub gamma_z: f64,
    pub sigma1_hat: f64,
    pub sigma1_tilde: f64,
    pub sigma2_hat: f64,
    pub sigma2_tilde: f64,
    pub sigma1: f64,
    /// `min(sigma2_hat, sigma2_tilde)`: the smaller descent coefficient is the one that
    /// lower-bounds the per-step decrease of the Lagrangian.
    pub sigma2: f64,
    /// `sigma1 / sigma2`.
    pub c_alpha: f64,
    /// `sigma1 / max(sigma2_hat, sigma2_tilde)`, the literal max rule. It is independent of
    /// `alpha` whenever `sigma2_tilde` dominates, so it is reported but not used.
    pub c_alpha_max_rule: f64,
}

impl EConstants {
    /// Every `c_i < 0` and `gamma_z > 0`.
    pub fn is_valid(&self) -> bool {
        self.c.iter().all(|c| *c < 0.0) && self.gamma_z > 0.0
    }
}

pub fn c_constants(params: &NesttParams, lipschitz: &[f64], l0: f64) -> Result<EConstants> {
    let n = lipschitz.len();
    if params.n() != n {
        return Err(NesttError::DimensionMismatch {
            expected: n,
            got: params.n(),
        });
    }
    let nf = n as f64;
    let eta_sum = params.eta_sum();
    let mut c = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut sigma1_hat = f64::NEG_INFINITY;
    let mut sigma2_hat = f64::NEG_INFINITY;
    for i in 0..n {
        let (a, eta, l, p) = (params.alpha[i], params.eta[i], lipschitz[i], params.p[i]);
        let ln = l / nf;
        let g = eta - ln;
        let ci = l * l / (a * eta * nf * nf) - g / 2.0 + (1.0 - a) / a * ln;
        c.push(ci);
        gamma.push(g);
        let s1 = 4.0 * (ln * ln + eta * eta + (1.0 / a - 1.0).powi(2) * ln * ln)
            + 3.0 * (l.powi(4) / (a * eta * eta * nf.powi(4)) + ln * ln);
        sigma1_hat = sigma1_hat.max(s1);
        sigma2_hat = sigma2_hat.max(p * (g / 2.0 - ln * ln / (a * eta) - (1.0 - a) / a * ln));
    }
    let sigma1_tilde = params.eta.iter().map(|e| 4.0 * e * e).sum::<f64>()
        + (2.0 + eta_sum + l0).powi(2)
        + 3.0 * lipschitz.iter().map(|l| (l / nf).powi(2)).sum::<f64>();
    let sigma2_tilde = (eta_sum - l0) / 2.0;
    let sigma1 = sigma1_hat.max(sigma1_tilde);
    let sigma2 = sigma2_hat.min(sigma2_tilde);
    Ok(EConstants {
        c,
        gamma,
        gamma_z: eta_sum - l0,
        sigma1_hat,
        sigma1_tilde,
        sigma2_hat,
        sigma2_tilde,
        sigma1,
        sigma2,
        c_alpha: sigma1 / sigma2,
        c_alpha_max_rule: sigma1 / sigma2_hat.max(sigma2_tilde),
    })
}

/// Solves `argmin_x (1/N) g(x) + <lambda, x - z> + (alpha_eta/2) ||x - z||^2`.
///
/// Returns the minimizer and the number of component-gradient evaluations it cost (one for
/// the closed-form quadratic solve).
pub fn solve_local_exact(
    component: &SmoothComponent,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    alpha_eta: f64,
    n: usize,
    tol: f64,
) -> Result<(DVector<f64>, u64)> {
    LocalSolver::new(component, alpha_eta, n)?.solve(component, z, z, lambda, tol)
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

/// Per-component local solver; the quadratic factorization depends only on
/// `(1/N) A + alpha eta I` and is reused across iterations.
#[derive(Debug, Clone)]
struct LocalSolver {
    factor: Option<Factor>,
    alpha_eta: f64,
    n: usize,
}

impl LocalSolver {
    fn new(component: &SmoothComponent, alpha_eta: f64, n: usize) -> Result<Self> {
        if alpha_eta <= component.lipschitz() / n as f64 {
            return Err(NesttError::InvalidParameters(format!(
                "local model needs alpha*eta = {alpha_eta} > L_i/N = {}",
                component.lipschitz() / n as f64
            )));
        }
        let factor = match component {
            SmoothComponent::Quadratic(q) => {
                let d = q.b().len();
                let m = q.a() / n as f64 + DMatrix::identity(d, d) * alpha_eta;
                Some(match m.clone().cholesky() {
                    Some(ch) => Factor::Cholesky(ch),
                    None => Factor::Lu(m.lu()),
                })
            }
            SmoothComponent::BlackBox(_) => None,
        };
        Ok(LocalSolver { factor, alpha_eta, n })
    }

    fn solve(
        &self,
        component: &SmoothComponent,
        z: &DVector<f64>,
        warm_start: &DVector<f64>,
        lambda: &DVector<f64>,
        tol: f64,
    ) -> Result<(DVector<f64>, u64)> {
        let nf = self.n as f64;
        match (&self.factor, component) {
            (Some(factor), SmoothComponent::Quadratic(q)) => {
                let rhs = z * self.alpha_eta - lambda - q.b() / nf;
                let x = match factor {
                    Factor::Cholesky(ch) => ch.solve(&rhs),
                    Factor::Lu(lu) => lu.solve(&rhs).ok_or_else(|| {
                        NesttError::InvalidParameters("singular local system".into())
                    })?,
                };
                Ok((x, 1))
            }
            _ => {
                let step = 1.0 / (self.alpha_eta + component.lipschitz() / nf);
                let mut x = warm_start.clone();
                let mut residual = f64::INFINITY;
                for k in 1..=LOCAL_SOLVE_MAX_ITERS {
                    let grad = component.gradient(&x) / nf + lambda + (&x - z) * self.alpha_eta;
                    residual = grad.norm();
                    if residual <= tol {
                        return Ok((x, k as u64));
                    }
                    x -= grad * step;
                }
                Err(NesttError::Convergence {
                    iterations: LOCAL_SOLVE_MAX_ITERS,
                    residual,
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EState {
    z: DVector<f64>,
    x: Vec<DVector<f64>>,
    lambda: Vec<DVector<f64>>,
    schedule: Schedule,
    params: NesttParams,
    solvers: Arc<Vec<LocalSolver>>,
    grad_evals: u64,
    iter: u64,
    last_index: Option<usize>,
}

/// Starts from consensus `x_i = z0` with `lambda_i = -(1/N) grad g_i(z0)`, which keeps the
/// identity `lambda_i = -(1/N) grad g_i(x_i)` true for all later iterates.
pub fn init_e(
    problem: &CompositeProblem,
    params: &NesttParams,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
) -> Result<EState> {
    params.validate_exact_for(problem)?;
    if z0.len() != problem.dim() {
        return Err(NesttError::DimensionMismatch {
            expected: problem.dim(),
            got: z0.len(),
        });
    }
    let constants = c_constants(params, &problem.lipschitz(), problem.l0())?;
    if !constants.is_valid() {
        return Err(NesttError::InvalidParameters(format!(
            "exact variant needs every c_i < 0 (c = {:?})",
            constants.c
        )));
    }
    let n = problem.n();
    let solvers = problem
        .components()
        .iter()
        .zip(params.alpha.iter().zip(&params.eta))
        .map(|(c, (a, eta))| LocalSolver::new(c, a * eta, n))
        .collect::<Result<Vec<_>>>()?;
    let lambda = problem
        .components()
        .iter()
        .map(|c| c.gradient(z0) / -(n as f64))
        .collect();
    Ok(EState {
        z: z0.clone(),
        x: vec![z0.clone(); n],
        lambda,
        schedule: Schedule::new(schedule, n)?,
        params: params.clone(),
        solvers: Arc::new(solvers),
        grad_evals: n as u64,
        iter: 0,
        last_index: None,
    })
}

impl EState {
    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn x(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn lambda(&self) -> &[DVector<f64>] {
        &self.lambda
    }

    pub fn params(&self) -> &NesttParams {
        &self.params
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    pub fn iter(&self) -> u64 {
        self.iter
    }

    pub fn last_index(&self) -> Option<usize> {
        self.last_index
    }

    pub fn lagrangian(&self, problem: &CompositeProblem) -> Result<f64> {
        metrics::augmented_lagrangian(problem, &self.x, &self.z, &self.lambda, &self.params.eta)
    }

    pub fn consensus_violation(&self) -> f64 {
        self.x.iter().map(|xi| (xi - &self.z).norm_squared()).sum()
    }

    /// The `z` minimizing the augmented Lagrangian at the current `(x, lambda)`.
    pub fn z_update(&self, problem: &CompositeProblem) -> Result<DVector<f64>> {
        let mut u = DVector::zeros(problem.dim());
        for (xi, (li, eta)) in self.x.iter().zip(self.lambda.iter().zip(&self.params.eta)) {
            u += xi * *eta + li;
        }
        u *= self.params.beta;
        solve_z_subproblem(problem, &u, self.params.beta, Z_SUBPROBLEM_TOL)
    }

    /// One iteration with a forced component index.
    pub fn step_at(&mut self, problem: &CompositeProblem, i: usize) -> Result<()> {
        if i >= problem.n() {
            return Err(NesttError::InvalidArgument(format!("component index {i} out of range")));
        }
        self.z = self.z_update(problem)?;
        let (xi, cost) = self.solvers[i].solve(
            problem.component(i),
            &self.z,
            &self.x[i],
            &self.lambda[i],
            LOCAL_SOLVE_TOL,
        )?;
        let alpha_eta = self.params.alpha[i] * self.params.eta[i];
        self.lambda[i] += (&xi - &self.z) * alpha_eta;
        self.x[i] = xi;
        self.grad_evals += cost;
        self.iter += 1;
        self.last_index = Some(i);
        Ok(())
    }

    pub fn step_e(&mut self, problem: &CompositeProblem) -> Result<usize> {
        let i = self.schedule.next_index();
        self.step_at(problem, i)?;
        Ok(i)
    }
}

impl Stepper for EState {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()> {
        self.step_e(problem).map(|_| ())
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
        self.params.beta
    }

    fn diagnostics(&self, problem: &CompositeProblem) -> Result<(Option<f64>, Option<f64>)> {
        Ok((Some(self.lagrangian(problem)?), Some(self.consensus_violation())))
    }
}

pub fn run_e(
    problem: &CompositeProblem,
    params: &NesttParams,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
    iters: u64,
    opts: RunOptions,
) -> Result<RunRecord> {
    let mut state = init_e(problem, params, z0, schedule)?;
    let (samples, final_z) = drive(problem, &mut state, iters, opts)?;
    let output_index = ChaCha8Rng::seed_from_u64(schedule.seed ^ OUTPUT_INDEX_SALT).gen_range(1..=iters);
    Ok(RunRecord {
        run_id: format!("nestt_e-s{}", schedule.seed),
        algorithm: "nestt_e".into(),
        sampling: String::new(),
        seed: schedule.seed,
        fingerprint: String::new(),
        samples,
        final_z,
        output_index: Some(output_index),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::NonsmoothSpec;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn scalar_half_square() -> SmoothComponent {
        SmoothComponent::quadratic(DMatrix::identity(1, 1), dvector![0.0]).unwrap()
    }

    fn scalar_problem() -> CompositeProblem {
        CompositeProblem::new(vec![scalar_half_square()], None, NonsmoothSpec::Zero).unwrap()
    }

    #[test]
    fn c_constant_examples() {
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![3.0]).unwrap();
        let k = c_constants(&params, &[1.0], 0.0).unwrap();
        assert_relative_eq!(k.c[0], -2.0 / 3.0, epsilon = 1e-15);
        assert!(k.is_valid());

        // eta = 2 sits exactly on the threshold for alpha = 1, L = 1, N = 1.
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![2.0]).unwrap();
        let k = c_constants(&params, &[1.0], 0.0).unwrap();
        assert_relative_eq!(k.c[0], 0.0, epsilon = 1e-15);
        assert!(!k.is_valid());

        let params = NesttParams::new(vec![1.0], vec![1.0], vec![1.5]).unwrap();
        let k = c_constants(&params, &[1.0], 0.0).unwrap();
        assert_relative_eq!(k.c[0], 5.0 / 12.0, epsilon = 1e-15);
        assert!(!k.is_valid());

        let params = NesttParams::new(vec![1.0], vec![1.0], vec![2.5]).unwrap();
        assert!(c_constants(&params, &[1.0], 0.0).unwrap().c[0] < 0.0);
    }

    #[test]
    fn larger_alpha_shrinks_rate_constant() {
        // p_i = L_i / sum L, eta_i = 3 L_i / N, L_0 = 0.
        let l = [1.0, 1.0];
        let eta = vec![1.5, 1.5];
        let small = NesttParams::new(vec![1.0; 2], vec![0.5; 2], eta.clone()).unwrap();
        let large = NesttParams::new(vec![4.0; 2], vec![0.5; 2], eta).unwrap();
        let ks = c_constants(&small, &l, 0.0).unwrap();
        let kl = c_constants(&large, &l, 0.0).unwrap();
        assert!(kl.c_alpha < ks.c_alpha, "{} vs {}", kl.c_alpha, ks.c_alpha);
        // Hand values: sigma1 = 44.5 for both; sigma2 = 1/6 and 5/12.
        assert_relative_eq!(ks.sigma1, 44.5, epsilon = 1e-12);
        assert_relative_eq!(ks.sigma2, 1.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(kl.sigma2, 5.0 / 12.0, epsilon = 1e-12);
        assert_relative_eq!(ks.c_alpha_max_rule, kl.c_alpha_max_rule, epsilon = 1e-12);
    }

    #[test]
    fn local_solve_examples() {
        let g = scalar_half_square();
        let (x, cost) = solve_local_exact(&g, &dvector![0.0], &dvector![0.0], 3.0, 1, 1e-12).unwrap();
        assert_eq!((x[0], cost), (0.0, 1));
        let (x, _) = solve_local_exact(&g, &dvector![1.0], &dvector![0.0], 3.0, 1, 1e-12).unwrap();
        assert_relative_eq!(x[0], 0.75, epsilon = 1e-15);
        let (x, _) = solve_local_exact(&g, &dvector![1.0], &dvector![-1.0], 3.0, 1, 1e-12).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        assert!(solve_local_exact(&g, &dvector![1.0], &dvector![0.0], 0.5, 1, 1e-12).is_err());
    }

    #[test]
    fn black_box_local_solve_meets_tolerance() {
        // g(x) = sum log cosh(x_k) + x_k^2 / 2 has a 2-Lipschitz gradient.
        let g = SmoothComponent::black_box(
            2,
            2.0,
            |x| x.iter().map(|v| v.cosh().ln() + 0.5 * v * v).sum(),
            |x| x.map(|v| v.tanh() + v),
        );
        let z = dvector![0.4, -1.2];
        let lambda = dvector![0.1, 0.3];
        let (x, cost) = solve_local_exact(&g, &z, &lambda, 3.0, 2, 1e-11).unwrap();
        let residual = g.gradient(&x) / 2.0 + &lambda + (&x - &z) * 3.0;
        assert!(residual.norm() <= 1e-11);
        assert!(cost > 1);
    }

    #[test]
    fn one_full_step_by_hand() {
        let p = scalar_problem();
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![3.0]).unwrap();
        let mut s = init_e(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 0)).unwrap();
        assert_eq!(s.lambda()[0], dvector![-1.0]);
        let before = s.lagrangian(&p).unwrap();
        s.step_e(&p).unwrap();
        assert_relative_eq!(s.z()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.x()[0][0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(s.lambda()[0][0], -0.75, epsilon = 1e-15);
        assert!(s.lagrangian(&p).unwrap() <= before);
        assert_eq!(s.grad_evals(), 2);
    }

    #[test]
    fn stationary_consensus_is_fixed() {
        let p = scalar_problem();
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![3.0]).unwrap();
        let mut s = init_e(&p, &params, &dvector![0.0], &ScheduleSpec::uniform(1, 0)).unwrap();
        s.step_e(&p).unwrap();
        assert_eq!(s.z()[0], 0.0);
        assert_eq!(s.x()[0][0], 0.0);
        assert_eq!(s.lambda()[0][0], 0.0);
    }

    #[test]
    fn rejects_invalid_constants() {
        let p = scalar_problem();
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![1.5]).unwrap();
        assert!(init_e(&p, &params, &dvector![0.0], &ScheduleSpec::uniform(1, 0)).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let p = CompositeProblem::new(
            vec![scalar_half_square(), scalar_half_square()],
            None,
            NonsmoothSpec::L1Ball { radius: 0.5 },
        )
        .unwrap();
        let params = NesttParams::new(vec![1.0; 2], vec![0.5; 2], vec![1.5; 2]).unwrap();
        let spec = ScheduleSpec::uniform(2, 17);
        let mut a = run_e(&p, &params, &dvector![0.4], &spec, 30, RunOptions::every(1)).unwrap();
        let mut b = run_e(&p, &params, &dvector![0.4], &spec, 30, RunOptions::every(1)).unwrap();
        for s in a.samples.iter_mut().chain(b.samples.iter_mut()) {
            s.wallclock_ns = 0;
        }
        assert_eq!(a, b);
    }
}
