#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nestt::problem::{synthetic_quadratic_problem, Curvature, SyntheticConfig};
use nestt::{CompositeProblem, NonsmoothSpec, SmoothComponent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_h(rng: &mut ChaCha8Rng, d: usize) -> NonsmoothSpec {
    match rng.gen_range(0..4) {
        0 => NonsmoothSpec::Zero,
        1 => NonsmoothSpec::L1Penalty { mu: rng.gen_range(0.01..0.5) },
        2 => NonsmoothSpec::L1Ball { radius: rng.gen_range(0.5..3.0) },
        _ => NonsmoothSpec::Box {
            lo: DVector::from_element(d, -rng.gen_range(0.5..2.0)),
            hi: DVector::from_element(d, rng.gen_range(0.5..2.0)),
        },
    }
}

/// Random nonconvex quadratic instance with `N <= max_n`, `d <= max_d`.
pub fn random_instance(seed: u64, max_n: usize, max_d: usize, h: Option<NonsmoothSpec>, g0: bool) -> CompositeProblem {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max_n);
    let d = r.gen_range(1..=max_d);
    let lipschitz: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..5.0)).collect();
    let h = h.unwrap_or_else(|| random_h(&mut r, d));
    // Small enough that every parameter rule keeps sum(eta) > 3 L0.
    let l_min = lipschitz.iter().cloned().fold(f64::INFINITY, f64::min);
    let g0_lipschitz = g0.then(|| r.gen_range(0.05..0.3) * l_min);
    synthetic_quadratic_problem(&SyntheticConfig {
        dim: d,
        lipschitz,
        curvature: Curvature::Indefinite,
        h,
        g0_lipschitz,
        seed: seed.wrapping_mul(31).wrapping_add(7),
    })
    .unwrap()
}

/// A random point in the domain of `h`.
pub fn feasible_point(problem: &CompositeProblem, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    let raw = DVector::from_fn(problem.dim(), |_, _| r.gen_range(-1.5..1.5));
    nestt::prox::prox_h(problem.h(), &raw, 1.0)
}

/// `max |a - b| / max(1, max |b|)`.
pub fn rel_dev(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Straight from the definition: `(1/N) sum g_i + g_0 + h + sum_i w_i ||(1/N)(grad g_i(z) - t_i)||^2`
/// with `w_i = 3 p_i eta_i / (alpha_i eta_i)^2`.
pub fn naive_potential(problem: &CompositeProblem, params: &nestt::NesttParams, z: &DVector<f64>, table: &[DVector<f64>]) -> f64 {
    let n = problem.n();
    let mut total = 0.0;
    for i in 0..n {
        let g = problem.component(i);
        total += g.value(z) / n as f64;
        let diff = (g.gradient(z) - &table[i]) / n as f64;
        let w = 3.0 * params.p[i] * params.eta[i] / (params.alpha[i] * params.eta[i]).powi(2);
        total += w * diff.dot(&diff);
    }
    if let Some(g0) = problem.g0() {
        total += g0.value(z);
    }
    total + problem.h().value(z)
}

pub fn naive_lagrangian(
    problem: &CompositeProblem,
    x: &[DVector<f64>],
    z: &DVector<f64>,
    lambda: &[DVector<f64>],
    eta: &[f64],
) -> f64 {
    let n = problem.n() as f64;
    let mut total = 0.0;
    for i in 0..problem.n() {
        let mut inner = 0.0;
        let mut sq = 0.0;
        for k in 0..z.len() {
            let diff = x[i][k] - z[k];
            inner += lambda[i][k] * diff;
            sq += diff * diff;
        }
        total += problem.component(i).value(&x[i]) / n + inner + 0.5 * eta[i] * sq;
    }
    total + problem.g0().map_or(0.0, |g| g.value(z)) + problem.h().value(z)
}

pub fn quadratic_parts(c: &SmoothComponent) -> (&DMatrix<f64>, &DVector<f64>) {
    match c {
        SmoothComponent::Quadratic(q) => (q.a(), q.b()),
        SmoothComponent::BlackBox(_) => panic!("expected a quadratic component"),
    }
}

/// Aggregated `(A, b)` of the smooth part `(1/N) sum g_i + g_0`.
pub fn smooth_quadratic(problem: &CompositeProblem) -> (DMatrix<f64>, DVector<f64>) {
    let d = problem.dim();
    let n = problem.n() as f64;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for c in problem.components() {
        let (ai, bi) = quadratic_parts(c);
        a += ai / n;
        b += bi / n;
    }
    if let Some(g0) = problem.g0() {
        let (a0, b0) = quadratic_parts(g0);
        a += a0;
        b += b0;
    }
    (a, b)
}

/// Global minimum of a quadratic over a box by enumerating every face: each coordinate is
/// pinned to a bound or free, and the free block is solved at its stationary point.
pub fn box_quadratic_minimum(a: &DMatrix<f64>, b: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let d = b.len();
    let value = |z: &DVector<f64>| 0.5 * z.dot(&(a * z)) + b.dot(z);
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(d as u32) {
        let mut state = vec![0u8; d];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&k| state[k] == 2).collect();
        let mut z = DVector::from_fn(d, |k, _| if state[k] == 0 { lo[k] } else { hi[k] });
        if !free.is_empty() {
            let m = free.len();
            let aff = DMatrix::from_fn(m, m, |r, s| a[(free[r], free[s])]);
            let mut rhs = DVector::from_fn(m, |r, _| -b[free[r]]);
            for k in (0..d).filter(|k| state[*k] != 2) {
                for r in 0..m {
                    rhs[r] -= a[(free[r], k)] * z[k];
                }
            }
            let Some(sol) = aff.lu().solve(&rhs) else { continue };
            if free.iter().zip(sol.iter()).any(|(&k, v)| *v < lo[k] - 1e-12 || *v > hi[k] + 1e-12) {
                continue;
            }
            for (r, &k) in free.iter().enumerate() {
                z[k] = sol[r];
            }
        }
        best = best.min(value(&z));
    }
    best
}

/// Prints one acceptance line and returns the verdict.
pub fn report(criterion: u32, title: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion} [{}] {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
