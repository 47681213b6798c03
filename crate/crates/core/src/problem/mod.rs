//! Composite finite-sum problems `f(z) = (1/N) sum_i g_i(z) + g_0(z) + h(z)`.
//!
//! Each `g_i` is smooth (possibly nonconvex) with an `L_i`-Lipschitz gradient, `g_0` is an
//! optional smooth term handled by the coordinating node, and `h` is a convex nonsmooth term
//! given in closed form (see [`NonsmoothSpec`]).

mod generate;
mod text;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{NesttError, Result};

pub use generate::{
    generate_regression_instance, synthetic_quadratic_problem, BatchProfile, Curvature,
    RegressionConfig, SyntheticConfig,
};
pub use text::{read_problem, write_problem};

pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Quadratic `g(z) = 1/2 z^T A z + b^T z` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lipschitz: f64,
}

impl Quadratic {
    /// Builds a quadratic whose Lipschitz constant is the spectral norm of `a`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let lipschitz = spectral_norm_exact(&a);
        Self::with_lipschitz(a, b, lipschitz)
    }

    pub fn with_lipschitz(a: DMatrix<f64>, b: DVector<f64>, lipschitz: f64) -> Result<Self> {
        let d = b.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(NesttError::InvalidArgument(format!(
                "quadratic matrix is {}x{} but linear term has length {}",
                a.nrows(),
                a.ncols(),
                d
            )));
        }
        for i in 0..d {
            for j in 0..i {
                let (x, y) = (a[(i, j)], a[(j, i)]);
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(NesttError::InvalidArgument(format!(
                        "quadratic matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(NesttError::InvalidArgument(format!(
                "Lipschitz constant must be finite and nonnegative, got {lipschitz}"
            )));
        }
        Ok(Quadratic { a, b, lipschitz })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
}

/// User-supplied smooth function with a declared gradient Lipschitz constant.
#[derive(Clone)]
pub struct BlackBox {
    pub dim: usize,
    pub value: ValueFn,
    pub gradient: GradFn,
    pub lipschitz: f64,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum SmoothComponent {
    Quadratic(Quadratic),
    BlackBox(BlackBox),
}

impl SmoothComponent {
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Quadratic::new(a, b).map(SmoothComponent::Quadratic)
    }

    pub fn black_box<V, G>(dim: usize, lipschitz: f64, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        SmoothComponent::BlackBox(BlackBox {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothComponent::Quadratic(q) => q.b.len(),
            SmoothComponent::BlackBox(bb) => bb.dim,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SmoothComponent::Quadratic(q) => q.lipschitz,
            SmoothComponent::BlackBox(bb) => bb.lipschitz,
        }
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            SmoothComponent::Quadratic(q) => 0.5 * z.dot(&(&q.a * z)) + q.b.dot(z),
            SmoothComponent::BlackBox(bb) => (bb.value)(z),
        }
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            SmoothComponent::Quadratic(q) => &q.a * z + &q.b,
            SmoothComponent::BlackBox(bb) => (bb.gradient)(z),
        }
    }

    /// Black-box components are treated as nonconvex.
    pub fn is_convex(&self) -> bool {
        match self {
            SmoothComponent::Quadratic(q) => {
                let scale = 1.0 + q.lipschitz;
                q.a.clone().symmetric_eigenvalues().min() >= -1e-12 * scale
            }
            SmoothComponent::BlackBox(_) => false,
        }
    }
}

/// The nonsmooth part `h = p + indicator(Z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NonsmoothSpec {
    Zero,
    L1Penalty { mu: f64 },
    L1Ball { radius: f64 },
    Box { lo: DVector<f64>, hi: DVector<f64> },
}

const FEASIBILITY_TOL: f64 = 1e-9;

impl NonsmoothSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            NonsmoothSpec::Zero => Ok(()),
            NonsmoothSpec::L1Penalty { mu } if *mu >= 0.0 && mu.is_finite() => Ok(()),
            NonsmoothSpec::L1Penalty { mu } => Err(NesttError::InvalidArgument(format!(
                "l1 penalty weight must be nonnegative, got {mu}"
            ))),
            NonsmoothSpec::L1Ball { radius } if *radius > 0.0 && radius.is_finite() => Ok(()),
            NonsmoothSpec::L1Ball { radius } => Err(NesttError::InvalidArgument(format!(
                "l1 ball radius must be positive, got {radius}"
            ))),
            NonsmoothSpec::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(NesttError::DimensionMismatch {
                        expected: dim,
                        got: lo.len().min(hi.len()),
                    });
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                    return Err(NesttError::InvalidArgument("box requires lo <= hi".into()));
                }
                Ok(())
            }
        }
    }

    /// `h(z)`, with `+inf` outside the constraint set (up to a small feasibility tolerance).
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            NonsmoothSpec::Zero => 0.0,
            NonsmoothSpec::L1Penalty { mu } => mu * z.lp_norm(1),
            NonsmoothSpec::L1Ball { radius } => {
                if z.lp_norm(1) <= radius * (1.0 + FEASIBILITY_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            NonsmoothSpec::Box { lo, hi } => {
                let inside = z
                    .iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .all(|(v, (l, h))| *v >= l - FEASIBILITY_TOL && *v <= h + FEASIBILITY_TOL);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompositeProblem {
    components: Vec<SmoothComponent>,
    g0: Option<SmoothComponent>,
    h: NonsmoothSpec,
    dim: usize,
}

impl CompositeProblem {
    pub fn new(
        components: Vec<SmoothComponent>,
        g0: Option<SmoothComponent>,
        h: NonsmoothSpec,
    ) -> Result<Self> {
        let dim = components
            .first()
            .map(SmoothComponent::dim)
            .ok_or_else(|| NesttError::InvalidArgument("at least one component required".into()))?;
        if dim == 0 {
            return Err(NesttError::InvalidArgument("dimension must be positive".into()));
        }
        for c in components.iter().chain(g0.iter()) {
            if c.dim() != dim {
                return Err(NesttError::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        h.validate(dim)?;
        Ok(CompositeProblem {
            components,
            g0,
            h,
            dim,
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[SmoothComponent] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &SmoothComponent {
        &self.components[i]
    }

    pub fn g0(&self) -> Option<&SmoothComponent> {
        self.g0.as_ref()
    }

    pub fn h(&self) -> &NonsmoothSpec {
        &self.h
    }

    pub fn lipschitz(&self) -> Vec<f64> {
        self.components.iter().map(SmoothComponent::lipschitz).collect()
    }

    /// `L_0`, zero when `g_0` is absent.
    pub fn l0(&self) -> f64 {
        self.g0.as_ref().map_or(0.0, SmoothComponent::lipschitz)
    }

    pub fn g0_is_nonconvex(&self) -> bool {
        self.g0.as_ref().is_some_and(|g| !g.is_convex())
    }

    fn check(&self, i: usize, z: &DVector<f64>) -> Result<()> {
        if i >= self.n() {
            return Err(NesttError::InvalidArgument(format!(
                "component index {i} out of range for N = {}",
                self.n()
            )));
        }
        self.check_dim(z)
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim {
            return Err(NesttError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// `g_i(z)`, not divided by `N`.
    pub fn eval_component(&self, i: usize, z: &DVector<f64>) -> Result<f64> {
        self.check(i, z)?;
        Ok(self.components[i].value(z))
    }

    pub fn grad_component(&self, i: usize, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(i, z)?;
        Ok(self.components[i].gradient(z))
    }

    /// `(1/N) sum_i grad g_i(z) + grad g_0(z)`.
    pub fn full_gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        let mut g = DVector::zeros(self.dim);
        for c in &self.components {
            g += c.gradient(z);
        }
        g /= self.n() as f64;
        if let Some(g0) = &self.g0 {
            g += g0.gradient(z);
        }
        Ok(g)
    }

    /// `(1/N) sum_i g_i(z) + g_0(z)`.
    pub fn smooth_value(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_dim(z)?;
        let sum: f64 = self.components.iter().map(|c| c.value(z)).sum();
        Ok(sum / self.n() as f64 + self.g0.as_ref().map_or(0.0, |g| g.value(z)))
    }

    /// Full objective `f(z)`; `+inf` outside the feasible set.
    pub fn objective(&self, z: &DVector<f64>) -> Result<f64> {
        Ok(self.smooth_value(z)? + self.h.value(z))
    }
}

/// Largest absolute eigenvalue of a symmetric matrix from a full eigendecomposition.
///
/// Used for Lipschitz constants: a power-iteration estimate stopped on a small relative
/// change can sit below the true norm by more than its tolerance when the top eigenvalues
/// are close.
pub fn spectral_norm_exact(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration on `A^2`.
///
/// Stops when the estimate changes by less than `rel_tol` (relative) or after 500
/// iterations; in the latter case returns the Frobenius norm, which bounds the spectral norm.
pub fn spectral_norm_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> f64 {
    const MAX_ITERS: usize = 500;
    let d = a.nrows();
    if d == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_fn(d, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662).fract());
    v /= v.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..MAX_ITERS {
        let w = a * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - estimate).abs() <= rel_tol * next {
            return next;
        }
        estimate = next;
    }
    a.norm()
}
