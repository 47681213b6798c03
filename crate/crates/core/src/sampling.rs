//! Component-selection schedules and step/penalty parameter rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NesttError, Result};
use crate::problem::CompositeProblem;

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Independent draws from a categorical distribution.
    Iid(Vec<f64>),
    /// `0, 1, ..., N-1, 0, 1, ...`
    Cyclic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub seed: u64,
}

impl ScheduleSpec {
    pub fn iid(p: Vec<f64>, seed: u64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Iid(p),
            seed,
        }
    }

    pub fn uniform(n: usize, seed: u64) -> Self {
        Self::iid(vec![1.0 / n as f64; n], seed)
    }

    pub fn cyclic() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Cyclic,
            seed: 0,
        }
    }
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(NesttError::InvalidParameters(format!("{what} is empty")));
    }
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(NesttError::InvalidParameters(format!("{what} has negative entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL * p.len() as f64 {
        return Err(NesttError::InvalidParameters(format!(
            "{what} sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// Seeded index stream. One schedule belongs to one run.
#[derive(Debug, Clone)]
pub struct Schedule {
    n: usize,
    cdf: Option<Vec<f64>>,
    probabilities: Vec<f64>,
    rng: ChaCha8Rng,
    calls: u64,
}

impl Schedule {
    pub fn new(spec: &ScheduleSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(NesttError::InvalidArgument("schedule over zero components".into()));
        }
        let (cdf, probabilities) = match &spec.kind {
            ScheduleKind::Cyclic => (None, vec![1.0 / n as f64; n]),
            ScheduleKind::Iid(p) => {
                if p.len() != n {
                    return Err(NesttError::DimensionMismatch {
                        expected: n,
                        got: p.len(),
                    });
                }
                check_simplex(p, "sampling distribution")?;
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = p
                    .iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect();
                // Pin the top so rounding can never push a draw past the last bucket.
                let last = p.iter().rposition(|v| *v > 0.0).unwrap_or(n - 1);
                for c in &mut cdf[last..] {
                    *c = 1.0;
                }
                (Some(cdf), p.clone())
            }
        };
        Ok(Schedule {
            n,
            cdf,
            probabilities,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            calls: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Selection probabilities; the cyclic schedule reports the uniform long-run frequencies.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn is_cyclic(&self) -> bool {
        self.cdf.is_none()
    }

    pub fn next_index(&mut self) -> usize {
        let call = self.calls;
        self.calls += 1;
        match &self.cdf {
            None => (call % self.n as u64) as usize,
            Some(cdf) => {
                let u: f64 = self.rng.gen();
                cdf.partition_point(|c| *c <= u).min(self.n - 1)
            }
        }
    }
}

/// Named sampling rules used by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    Uniform,
    /// `p_i` proportional to `sqrt(L_i / N)`.
    SqrtLipschitz,
    /// `p_i` proportional to `L_i`.
    Lipschitz,
    Cyclic,
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::Uniform => "uniform",
            Sampling::SqrtLipschitz => "sqrt_lipschitz",
            Sampling::Lipschitz => "lipschitz",
            Sampling::Cyclic => "cyclic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Sampling::Uniform,
            Sampling::SqrtLipschitz,
            Sampling::Lipschitz,
            Sampling::Cyclic,
        ]
        .into_iter()
        .find(|v| v.name() == s)
    }

    /// Probabilities for the given Lipschitz constants (uniform for the cyclic rule).
    pub fn probabilities(self, lipschitz: &[f64]) -> Vec<f64> {
        let n = lipschitz.len();
        let weights: Vec<f64> = match self {
            Sampling::Uniform | Sampling::Cyclic => vec![1.0; n],
            Sampling::SqrtLipschitz => lipschitz.iter().map(|l| (l / n as f64).sqrt()).collect(),
            Sampling::Lipschitz => lipschitz.to_vec(),
        };
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }

    pub fn schedule(self, lipschitz: &[f64], seed: u64) -> ScheduleSpec {
        match self {
            Sampling::Cyclic => ScheduleSpec::cyclic(),
            _ => ScheduleSpec::iid(self.probabilities(lipschitz), seed),
        }
    }
}

/// Per-component step scalars `alpha_i`, sampling probabilities `p_i`, penalties `eta_i`,
/// and `beta = 1 / sum eta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NesttParams {
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    pub eta: Vec<f64>,
    pub beta: f64,
}

impl NesttParams {
    /// Builds parameters with `beta` derived from the penalties.
    pub fn new(alpha: Vec<f64>, p: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        let n = eta.len();
        if alpha.len() != n || p.len() != n || n == 0 {
            return Err(NesttError::InvalidParameters(
                "alpha, p and eta must have the same nonzero length".into(),
            ));
        }
        if alpha.iter().chain(eta.iter()).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(NesttError::InvalidParameters(
                "alpha and eta must be positive".into(),
            ));
        }
        check_simplex(&p, "p")?;
        let beta = 1.0 / eta.iter().sum::<f64>();
        Ok(NesttParams { alpha, p, eta, beta })
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    pub fn eta_sum(&self) -> f64 {
        self.eta.iter().sum()
    }

    fn check_common(&self, problem: &CompositeProblem) -> Result<()> {
        if self.n() != problem.n() {
            return Err(NesttError::DimensionMismatch {
                expected: problem.n(),
                got: self.n(),
            });
        }
        if (self.beta * self.eta_sum() - 1.0).abs() > 1e-12 {
            return Err(NesttError::InvalidParameters(
                "beta must equal 1 / sum(eta)".into(),
            ));
        }
        if problem.g0().is_some() && self.eta_sum() <= 3.0 * problem.l0() {
            return Err(NesttError::InvalidParameters(format!(
                "sum(eta) = {} must exceed 3 L0 = {}",
                self.eta_sum(),
                3.0 * problem.l0()
            )));
        }
        Ok(())
    }

    /// Checks the standing assumptions for the gradient variant: `eta_i > L_i / N` and,
    /// with a `g_0` term, `sum eta_i > 3 L_0`.
    ///
    /// The `g_0` condition is enforced whenever `g_0` is present, convex or not, since the
    /// fixed-point `z` solver relies on it.
    pub fn validate_for(&self, problem: &CompositeProblem) -> Result<()> {
        self.check_common(problem)?;
        let n = problem.n() as f64;
        for (i, (eta, l)) in self.eta.iter().zip(problem.lipschitz()).enumerate() {
            if *eta <= l / n {
                return Err(NesttError::InvalidParameters(format!(
                    "eta[{i}] = {eta} must exceed L_i / N = {}",
                    l / n
                )));
            }
        }
        Ok(())
    }

    /// Checks what the exact-minimization variant needs: a strongly convex local problem
    /// (`alpha_i eta_i > L_i / N`) and the `g_0` condition.
    pub fn validate_exact_for(&self, problem: &CompositeProblem) -> Result<()> {
        self.check_common(problem)?;
        let n = problem.n() as f64;
        for (i, ((a, eta), l)) in self
            .alpha
            .iter()
            .zip(&self.eta)
            .zip(problem.lipschitz())
            .enumerate()
        {
            if a * eta <= l / n {
                return Err(NesttError::InvalidParameters(format!(
                    "alpha[{i}] * eta[{i}] = {} must exceed L_i / N = {}",
                    a * eta,
                    l / n
                )));
            }
        }
        Ok(())
    }
}

fn check_lipschitz(lipschitz: &[f64]) -> Result<()> {
    if lipschitz.is_empty() {
        return Err(NesttError::InvalidParameters("no components".into()));
    }
    if let Some((i, l)) = lipschitz
        .iter()
        .enumerate()
        .find(|(_, l)| !(**l > 0.0) || !l.is_finite())
    {
        return Err(NesttError::InvalidParameters(format!(
            "L[{i}] = {l} must be positive"
        )));
    }
    Ok(())
}

/// Square-root-Lipschitz parameters for the gradient variant:
/// `p_i = alpha_i = sqrt(L_i/N) / S`, `eta_i = 3 S sqrt(L_i/N)`, `beta = 1 / (3 S^2)` with
/// `S = sum_j sqrt(L_j / N)`.
pub fn nestt_g_parameters(lipschitz: &[f64]) -> Result<NesttParams> {
    check_lipschitz(lipschitz)?;
    let n = lipschitz.len() as f64;
    let roots: Vec<f64> = lipschitz.iter().map(|l| (l / n).sqrt()).collect();
    let s: f64 = roots.iter().sum();
    let p: Vec<f64> = roots.iter().map(|r| r / s).collect();
    let eta: Vec<f64> = roots.iter().map(|r| 3.0 * s * r).collect();
    Ok(NesttParams {
        alpha: p.clone(),
        p,
        eta,
        beta: 1.0 / (3.0 * s * s),
    })
}

/// Gradient-variant parameters for an arbitrary sampling distribution `p`:
/// `alpha_i = p_i`, `eta_i = c p_i`, `beta = 1 / c` with `c = max_i 3 L_i / (N p_i^2)`, so
/// that `alpha_i = p_i = beta eta_i` and `eta_i p_i N >= 3 L_i`. For `p_i` proportional to
/// `sqrt(L_i)` this coincides with [`nestt_g_parameters`].
pub fn nestt_g_parameters_with(lipschitz: &[f64], p: &[f64]) -> Result<NesttParams> {
    check_lipschitz(lipschitz)?;
    if p.len() != lipschitz.len() {
        return Err(NesttError::DimensionMismatch {
            expected: lipschitz.len(),
            got: p.len(),
        });
    }
    check_simplex(p, "p")?;
    if p.iter().any(|v| *v <= 0.0) {
        return Err(NesttError::InvalidParameters("every p_i must be positive".into()));
    }
    let n = lipschitz.len() as f64;
    let c = lipschitz
        .iter()
        .zip(p)
        .map(|(l, pi)| 3.0 * l / (n * pi * pi))
        .fold(0.0, f64::max);
    Ok(NesttParams {
        alpha: p.to_vec(),
        p: p.to_vec(),
        eta: p.iter().map(|pi| c * pi).collect(),
        beta: 1.0 / c,
    })
}

/// Smallest penalty keeping `c_i < 0` for the exact-minimization variant:
/// `L_i ((2 - alpha_i) + sqrt((alpha_i - 2)^2 + 8 alpha_i)) / (2 N alpha_i)`.
pub fn nestt_e_eta_threshold(alpha: f64, lipschitz: f64, n: usize) -> f64 {
    lipschitz * ((2.0 - alpha) + ((alpha - 2.0).powi(2) + 8.0 * alpha).sqrt())
        / (2.0 * n as f64 * alpha)
}

/// Penalties `eta_i = safety * threshold(alpha_i, L_i)` with `p_i = L_i / sum L_j`.
///
/// `safety == 1` is nudged up by a relative `1e-9` so the threshold inequality stays strict.
pub fn nestt_e_parameters(lipschitz: &[f64], alpha: &[f64], safety: f64) -> Result<NesttParams> {
    check_lipschitz(lipschitz)?;
    if alpha.len() != lipschitz.len() {
        return Err(NesttError::DimensionMismatch {
            expected: lipschitz.len(),
            got: alpha.len(),
        });
    }
    if !(safety >= 1.0) || !safety.is_finite() {
        return Err(NesttError::InvalidParameters(format!(
            "safety factor must be >= 1, got {safety}"
        )));
    }
    let factor = if safety == 1.0 { 1.0 + 1e-9 } else { safety };
    let n = lipschitz.len();
    let eta: Vec<f64> = alpha
        .iter()
        .zip(lipschitz)
        .map(|(a, l)| factor * nestt_e_eta_threshold(*a, *l, n))
        .collect();
    let total: f64 = lipschitz.iter().sum();
    let p = lipschitz.iter().map(|l| l / total).collect();
    NesttParams::new(alpha.to_vec(), p, eta)
}
