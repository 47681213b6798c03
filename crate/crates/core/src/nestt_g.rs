//! NESTT-G: randomized primal-dual splitting with a linearized local step.
//!
//! Each iteration picks one component `i`, evaluates a single fresh gradient `grad g_i(z)`,
//! and updates `z` through the prox of `h + g_0`. The dual variables are never stored:
//! `lambda_i = -(1/N) * grad_table[i]`, where row `i` holds the gradient of `g_i` at the
//! iterate where `i` was last picked. That table is exactly a SAGA-style gradient memory,
//! which is why the method reduces to SAGA/SAG/IAG under particular parameter choices.
//!
//! Two update routes are provided. [`GState::step_compact`] is the production path
//! (`O(d)` state change per step). [`GState::step_primal_dual`] carries out the literal
//! `x`-step, dual ascent and `z`-minimization over all `N` blocks and is kept for
//! cross-checking the compact form.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NesttError, Result};
use crate::metrics;
use crate::problem::CompositeProblem;
use crate::prox::{solve_z_subproblem, Z_SUBPROBLEM_TOL};
use crate::record::{drive, RunOptions, RunRecord, Stepper};
use crate::sampling::{NesttParams, Schedule, ScheduleSpec};

/// Mixed into the schedule seed to draw the reported output index independently.
const OUTPUT_INDEX_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct GState {
    z: DVector<f64>,
    grad_table: Vec<DVector<f64>>,
    grad_sum: DVector<f64>,
    /// Local copy of the block picked last; every other block's copy equals `prev_z`.
    x_picked: DVector<f64>,
    prev_z: DVector<f64>,
    last_index: Option<usize>,
    schedule: Schedule,
    params: NesttParams,
    grad_evals: u64,
    iter: u64,
}

/// Initializes the gradient memory at `z0` (so `lambda_i = -(1/N) grad g_i(z0)`), costing
/// `N` gradient evaluations.
pub fn init_g(
    problem: &CompositeProblem,
    params: &NesttParams,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
) -> Result<GState> {
    params.validate_for(problem)?;
    if z0.len() != problem.dim() {
        return Err(NesttError::DimensionMismatch {
            expected: problem.dim(),
            got: z0.len(),
        });
    }
    let grad_table: Vec<DVector<f64>> = problem.components().iter().map(|c| c.gradient(z0)).collect();
    let grad_sum = grad_table.iter().fold(DVector::zeros(problem.dim()), |acc, g| acc + g);
    Ok(GState {
        z: z0.clone(),
        grad_table,
        grad_sum,
        x_picked: z0.clone(),
        prev_z: z0.clone(),
        last_index: None,
        schedule: Schedule::new(schedule, problem.n())?,
        params: params.clone(),
        grad_evals: problem.n() as u64,
        iter: 0,
    })
}

impl GState {
    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn prev_z(&self) -> &DVector<f64> {
        &self.prev_z
    }

    pub fn grad_table(&self) -> &[DVector<f64>] {
        &self.grad_table
    }

    pub fn grad_sum(&self) -> &DVector<f64> {
        &self.grad_sum
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

    /// `lambda_i = -(1/N) grad_table[i]`.
    pub fn lambda(&self, i: usize) -> DVector<f64> {
        &self.grad_table[i] * (-1.0 / self.grad_table.len() as f64)
    }

    /// Local copy `x_j` produced by the last step.
    pub fn x(&self, j: usize) -> &DVector<f64> {
        if Some(j) == self.last_index {
            &self.x_picked
        } else {
            &self.prev_z
        }
    }

    /// `sum_i ||x_i - z||^2` against the current `z`.
    pub fn consensus_violation(&self) -> f64 {
        match self.last_index {
            None => 0.0,
            Some(_) => {
                let others = (self.grad_table.len() - 1) as f64;
                others * (&self.prev_z - &self.z).norm_squared()
                    + (&self.x_picked - &self.z).norm_squared()
            }
        }
    }

    /// `sum_i 3 eta_i^2 ||x_i - z_prev||^2`: the consensus term that accompanies the gap in
    /// the sublinear rate for the distributed setting. Only the picked block contributes.
    pub fn weighted_local_offset(&self) -> f64 {
        match self.last_index {
            None => 0.0,
            Some(i) => 3.0 * self.params.eta[i].powi(2) * (&self.x_picked - &self.prev_z).norm_squared(),
        }
    }

    /// `u = z - beta [ (grad g_i(z) - table_i) / (N alpha_i) + (1/N) sum_j table_j ]`.
    fn compact_point(&self, i: usize, fresh: &DVector<f64>) -> DVector<f64> {
        let n = self.grad_table.len() as f64;
        let correction = (fresh - &self.grad_table[i]) / (n * self.params.alpha[i]);
        &self.z - (correction + &self.grad_sum / n) * self.params.beta
    }

    /// The point `u` whose prox gives the next iterate if component `i` were picked now.
    /// Diagnostic: the gradient it needs is not counted.
    pub fn compact_update_point(&self, problem: &CompositeProblem, i: usize) -> Result<DVector<f64>> {
        let fresh = problem.grad_component(i, &self.z)?;
        Ok(self.compact_point(i, &fresh))
    }

    /// One compact-form step with a forced component index.
    pub fn step_compact_at(&mut self, problem: &CompositeProblem, i: usize) -> Result<()> {
        let fresh = problem.grad_component(i, &self.z)?;
        self.grad_evals += 1;
        let u = self.compact_point(i, &fresh);
        let z_next = solve_z_subproblem(problem, &u, self.params.beta, Z_SUBPROBLEM_TOL)?;

        let n = self.grad_table.len() as f64;
        let scale = 1.0 / (self.params.alpha[i] * self.params.eta[i] * n);
        self.x_picked = &self.z - (&self.grad_table[i] - &fresh) * scale;

        self.grad_sum += &fresh - &self.grad_table[i];
        self.grad_table[i] = fresh;
        self.prev_z = std::mem::replace(&mut self.z, z_next);
        self.last_index = Some(i);
        self.iter += 1;
        self.debug_check_sum();
        Ok(())
    }

    pub fn step_compact(&mut self, problem: &CompositeProblem) -> Result<usize> {
        let i = self.schedule.next_index();
        self.step_compact_at(problem, i)?;
        Ok(i)
    }

    /// One step through the literal primal-dual updates, with a forced component index.
    pub fn step_primal_dual_at(&mut self, problem: &CompositeProblem, i: usize) -> Result<()> {
        let n = problem.n();
        let nf = n as f64;
        let fresh = problem.grad_component(i, &self.z)?;
        self.grad_evals += 1;

        let lambda: Vec<DVector<f64>> = (0..n).map(|j| self.lambda(j)).collect();
        let alpha_eta = self.params.alpha[i] * self.params.eta[i];

        // x-step: minimize the linearized local model; untouched blocks copy z.
        let mut x: Vec<DVector<f64>> = vec![self.z.clone(); n];
        x[i] = &self.z - (&lambda[i] + &fresh / nf) / alpha_eta;
        // Dual ascent on the picked block.
        let lambda_next_i = &lambda[i] + (&x[i] - &self.z) * alpha_eta;

        // z-step: minimize the augmented Lagrangian with the old multipliers.
        let mut u = DVector::zeros(problem.dim());
        for j in 0..n {
            u += &lambda[j] + &x[j] * self.params.eta[j];
        }
        u *= self.params.beta;
        let z_next = solve_z_subproblem(problem, &u, self.params.beta, Z_SUBPROBLEM_TOL)?;

        self.grad_table[i] = lambda_next_i * (-nf);
        self.grad_sum = self
            .grad_table
            .iter()
            .fold(DVector::zeros(problem.dim()), |acc, g| acc + g);
        self.x_picked = x.swap_remove(i);
        self.prev_z = std::mem::replace(&mut self.z, z_next);
        self.last_index = Some(i);
        self.iter += 1;
        Ok(())
    }

    pub fn step_primal_dual(&mut self, problem: &CompositeProblem) -> Result<usize> {
        let i = self.schedule.next_index();
        self.step_primal_dual_at(problem, i)?;
        Ok(i)
    }

    fn debug_check_sum(&self) {
        if cfg!(debug_assertions) {
            let sum = self
                .grad_table
                .iter()
                .fold(DVector::zeros(self.z.len()), |acc, g| acc + g);
            let scale = 1.0 + sum.amax();
            debug_assert!(
                (&sum - &self.grad_sum).amax() <= 1e-9 * scale,
                "incremental gradient sum drifted"
            );
        }
    }
}

impl Stepper for GState {
    fn step(&mut self, problem: &CompositeProblem) -> Result<()> {
        self.step_compact(problem).map(|_| ())
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
        Ok((
            Some(metrics::potential_q(problem, self)?),
            Some(self.consensus_violation()),
        ))
    }
}

/// Runs NESTT-G (compact form) for `iters` iterations.
pub fn run_g(
    problem: &CompositeProblem,
    params: &NesttParams,
    z0: &DVector<f64>,
    schedule: &ScheduleSpec,
    iters: u64,
    opts: RunOptions,
) -> Result<RunRecord> {
    let mut state = init_g(problem, params, z0, schedule)?;
    let (samples, final_z) = drive(problem, &mut state, iters, opts)?;
    let output_index = ChaCha8Rng::seed_from_u64(schedule.seed ^ OUTPUT_INDEX_SALT).gen_range(1..=iters);
    Ok(RunRecord {
        run_id: format!("nestt_g-s{}", schedule.seed),
        algorithm: "nestt_g".into(),
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
    use crate::problem::{NonsmoothSpec, SmoothComponent};
    use crate::sampling::nestt_g_parameters;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DMatrix};

    fn scalar_quadratic() -> CompositeProblem {
        let g = SmoothComponent::quadratic(DMatrix::identity(1, 1), dvector![0.0]).unwrap();
        CompositeProblem::new(vec![g], None, NonsmoothSpec::Zero).unwrap()
    }

    fn linear(b: f64) -> SmoothComponent {
        SmoothComponent::quadratic(DMatrix::zeros(1, 1), dvector![b]).unwrap()
    }

    #[test]
    fn init_fills_gradient_memory() {
        let p = scalar_quadratic();
        let params = nestt_g_parameters(&p.lipschitz()).unwrap();
        let s = init_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 0)).unwrap();
        assert_eq!(s.grad_table(), &[dvector![1.0]]);
        assert_eq!(s.grad_sum(), &dvector![1.0]);
        assert_eq!(s.grad_evals(), 1);

        let p = CompositeProblem::new(vec![linear(1.0), linear(3.0)], None, NonsmoothSpec::Zero)
            .unwrap();
        let params = NesttParams::new(vec![0.5; 2], vec![0.5; 2], vec![1.0; 2]).unwrap();
        let s = init_g(&p, &params, &dvector![-7.0], &ScheduleSpec::uniform(2, 0)).unwrap();
        assert_eq!(s.grad_sum(), &dvector![4.0]);
        assert_eq!(s.lambda(1), dvector![-1.5]);
    }

    #[test]
    fn two_compact_steps_by_hand() {
        let p = scalar_quadratic();
        let params = nestt_g_parameters(&[1.0]).unwrap();
        let mut s = init_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 0)).unwrap();
        s.step_compact(&p).unwrap();
        assert_relative_eq!(s.z()[0], 2.0 / 3.0, epsilon = 1e-15);
        s.step_compact(&p).unwrap();
        assert_relative_eq!(s.z()[0], 4.0 / 9.0, epsilon = 1e-15);
        assert_eq!(s.grad_evals(), 3);
    }

    #[test]
    fn primal_dual_step_by_hand() {
        let p = scalar_quadratic();
        let params = nestt_g_parameters(&[1.0]).unwrap();
        let mut s = init_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 0)).unwrap();
        assert_eq!(s.lambda(0), dvector![-1.0]);
        s.step_primal_dual(&p).unwrap();
        assert_relative_eq!(s.x(0)[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.lambda(0)[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(s.z()[0], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn fresh_memory_gives_full_gradient_step() {
        let p = CompositeProblem::new(
            vec![
                SmoothComponent::quadratic(DMatrix::from_diagonal(&dvector![2.0, -1.0]), dvector![0.5, 0.0])
                    .unwrap(),
                SmoothComponent::quadratic(DMatrix::identity(2, 2), dvector![-1.0, 2.0]).unwrap(),
            ],
            None,
            NonsmoothSpec::Zero,
        )
        .unwrap();
        let params = nestt_g_parameters(&p.lipschitz()).unwrap();
        let z0 = dvector![0.3, -0.8];
        let s = init_g(&p, &params, &z0, &ScheduleSpec::uniform(2, 1)).unwrap();
        let expected = &z0 - p.full_gradient(&z0).unwrap() * params.beta;
        for i in 0..2 {
            assert_relative_eq!(s.compact_update_point(&p, i).unwrap(), expected, epsilon = 1e-15);
        }
        // The picked block's local copy coincides with z when the memory is current.
        let mut t = s.clone();
        t.step_primal_dual_at(&p, 1).unwrap();
        assert_relative_eq!(t.x(1), &z0, epsilon = 1e-15);
    }

    #[test]
    fn run_g_records_each_iterate() {
        let p = scalar_quadratic();
        let params = nestt_g_parameters(&[1.0]).unwrap();
        let rec = run_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 3), 2, RunOptions::default())
            .unwrap();
        let gaps: Vec<f64> = rec.samples.iter().map(|s| s.gap).collect();
        assert_eq!(gaps.len(), 3);
        // gap = ||grad||^2 for h = 0.
        assert_relative_eq!(gaps[1], 4.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(gaps[2], 16.0 / 81.0, epsilon = 1e-14);
        assert!(matches!(rec.output_index, Some(1..=2)));
        assert!(run_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 3), 0, RunOptions::default())
            .is_err());
    }

    #[test]
    fn rejects_parameters_violating_penalty_bound() {
        let p = scalar_quadratic();
        let params = NesttParams::new(vec![1.0], vec![1.0], vec![0.5]).unwrap();
        assert!(init_g(&p, &params, &dvector![1.0], &ScheduleSpec::uniform(1, 0)).is_err());
    }
}
