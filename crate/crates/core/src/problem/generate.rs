//! Instance generators: the errors-in-variables sparse regression family and small random
//! quadratic families used by tests and gradient-count experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{spectral_norm_exact, CompositeProblem, NonsmoothSpec, Quadratic, SmoothComponent};
use crate::error::{NesttError, Result};

/// How samples are split into mini-batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchProfile {
    /// Equal batch sizes (up to remainder).
    #[default]
    Uniform,
    /// The first half of the batches hold twice as many samples as the rest, which roughly
    /// doubles their Lipschitz constants.
    HalfDouble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionConfig {
    /// Total number of samples.
    pub m_total: usize,
    pub p_dim: usize,
    /// Number of mini-batches, i.e. components `N`.
    pub n_components: usize,
    pub k_sparse: usize,
    pub noise_std: f64,
    pub covariate_noise_std: f64,
    pub batch_profile: BatchProfile,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            m_total: 2000,
            p_dim: 100,
            n_components: 20,
            k_sparse: 10,
            noise_std: 0.1,
            covariate_noise_std: 0.2,
            batch_profile: BatchProfile::Uniform,
            seed: 0,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_total", self.m_total),
            ("p_dim", self.p_dim),
            ("n_components", self.n_components),
            ("k_sparse", self.k_sparse),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(NesttError::config(format!("problem.{field}"), "must be positive"));
            }
        }
        if self.k_sparse > self.p_dim {
            return Err(NesttError::config("problem.k_sparse", "must not exceed p_dim"));
        }
        if self.m_total < self.n_components {
            return Err(NesttError::config("problem.m_total", "must be at least n_components"));
        }
        if !(self.noise_std > 0.0) || !self.noise_std.is_finite() {
            return Err(NesttError::config("problem.noise_std", "must be positive"));
        }
        if !(self.covariate_noise_std >= 0.0) || !self.covariate_noise_std.is_finite() {
            return Err(NesttError::config("problem.covariate_noise_std", "must be nonnegative"));
        }
        Ok(())
    }

    fn batch_sizes(&self) -> Vec<usize> {
        let n = self.n_components;
        let weights: Vec<usize> = match self.batch_profile {
            BatchProfile::Uniform => vec![1; n],
            BatchProfile::HalfDouble => (0..n).map(|i| if i < n.div_ceil(2) { 2 } else { 1 }).collect(),
        };
        let total_weight: usize = weights.iter().sum();
        let mut sizes: Vec<usize> = weights
            .iter()
            .map(|w| (self.m_total * w / total_weight).max(1))
            .collect();
        // Hand out (or take back) the rounding remainder one sample at a time.
        let mut assigned: usize = sizes.iter().sum();
        let mut i = 0;
        while assigned < self.m_total {
            sizes[i % n] += 1;
            assigned += 1;
            i += 1;
        }
        while assigned > self.m_total {
            let j = sizes.iter().enumerate().max_by_key(|(_, s)| **s).map(|(j, _)| j).unwrap();
            sizes[j] -= 1;
            assigned -= 1;
        }
        sizes
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        std * v
    })
}

/// Draws an errors-in-variables sparse regression instance split into mini-batches.
///
/// Batch `i` contributes `g_i(z) = (N/M) [ z^T (X_i^T X_i - W_i^T W_i) z - (A_i^T y_i)^T z ]`
/// with `A_i = X_i + W_i`, and the feasible set is the l1 ball of radius `||nu*||_1`.
/// Returns the problem and the sparse ground truth `nu*`.
pub fn generate_regression_instance(
    cfg: &RegressionConfig,
) -> Result<(CompositeProblem, DVector<f64>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = cfg.p_dim;
    let n = cfg.n_components;

    let mut truth = DVector::zeros(p);
    let magnitude = 1.0 / (cfg.k_sparse as f64).sqrt();
    for j in index::sample(&mut rng, p, cfg.k_sparse).iter() {
        truth[j] = if rng.gen::<bool>() { magnitude } else { -magnitude };
    }

    let scale = n as f64 / cfg.m_total as f64;
    let mut components = Vec::with_capacity(n);
    for rows in cfg.batch_sizes() {
        let x = gaussian_matrix(&mut rng, rows, p, 1.0);
        let w = gaussian_matrix(&mut rng, rows, p, cfg.covariate_noise_std);
        let noise = gaussian_matrix(&mut rng, rows, 1, cfg.noise_std).column(0).into_owned();
        let y = &x * &truth + noise;
        let observed = &x + &w;

        let mut hessian = (x.transpose() * &x - w.transpose() * &w) * (2.0 * scale);
        // Exact symmetry; the two products above round independently.
        hessian = (&hessian + hessian.transpose()) * 0.5;
        let linear = observed.transpose() * &y * (-scale);
        let lipschitz = spectral_norm_exact(&hessian);
        components.push(SmoothComponent::Quadratic(Quadratic::with_lipschitz(
            hessian, linear, lipschitz,
        )?));
    }

    let radius = truth.lp_norm(1);
    let problem = CompositeProblem::new(components, None, NonsmoothSpec::L1Ball { radius })?;
    Ok((problem, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    /// Hessian eigenvalues in `[0.1 L_i, L_i]`.
    Convex,
    /// Hessian eigenvalues in `[-L_i, L_i]`, with at least one negative.
    Indefinite,
}

/// Random quadratic components with prescribed Lipschitz constants.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub lipschitz: Vec<f64>,
    pub curvature: Curvature,
    pub h: NonsmoothSpec,
    /// Adds a quadratic `g_0` with this Lipschitz constant when set.
    pub g0_lipschitz: Option<f64>,
    pub seed: u64,
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, d, d, 1.0).qr().q()
}

fn random_quadratic(
    rng: &mut ChaCha8Rng,
    d: usize,
    lipschitz: f64,
    curvature: Curvature,
) -> Result<Quadratic> {
    let q = random_orthogonal(rng, d);
    let mut spectrum = DVector::from_fn(d, |_, _| match curvature {
        Curvature::Convex => rng.gen_range(0.1..=1.0),
        Curvature::Indefinite => rng.gen_range(-1.0..=1.0),
    });
    spectrum[0] = 1.0;
    if curvature == Curvature::Indefinite && d > 1 {
        spectrum[d - 1] = -rng.gen_range(0.2..=1.0);
    }
    let mut a = &q * DMatrix::from_diagonal(&(spectrum * lipschitz)) * q.transpose();
    a = (&a + a.transpose()) * 0.5;
    let b = DVector::from_fn(d, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v * lipschitz.max(1e-3)
    });
    Quadratic::with_lipschitz(a, b, lipschitz)
}

pub fn synthetic_quadratic_problem(cfg: &SyntheticConfig) -> Result<CompositeProblem> {
    if cfg.lipschitz.is_empty() || cfg.dim == 0 {
        return Err(NesttError::InvalidArgument(
            "synthetic problem needs at least one component and positive dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let components = cfg
        .lipschitz
        .iter()
        .map(|&l| random_quadratic(&mut rng, cfg.dim, l, cfg.curvature).map(SmoothComponent::Quadratic))
        .collect::<Result<Vec<_>>>()?;
    let g0 = cfg
        .g0_lipschitz
        .map(|l| random_quadratic(&mut rng, cfg.dim, l, Curvature::Convex).map(SmoothComponent::Quadratic))
        .transpose()?;
    CompositeProblem::new(components, g0, cfg.h.clone())
}
