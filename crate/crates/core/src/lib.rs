//! Stochastic primal-dual splitting for nonconvex composite finite sums
//! `min_z (1/N) sum_i g_i(z) + g_0(z) + h(z)`.
//!
//! [`nestt_g`] takes one linearized local step per iteration and reduces to SAGA, SAG or
//! IAG under particular parameters; [`nestt_e`] minimizes the picked local model exactly.
//! [`baselines`] holds reference methods and [`harness`] the CSV-producing experiment runner.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nestt_e;
pub mod nestt_g;
pub mod problem;
pub mod prox;
pub mod record;
pub mod sampling;

pub use error::{NesttError, Result};
pub use metrics::MetricSample;
pub use nestt_e::{c_constants, init_e, run_e, solve_local_exact, EConstants, EState};
pub use nestt_g::{init_g, run_g, GState};
pub use problem::{CompositeProblem, NonsmoothSpec, SmoothComponent};
pub use record::{RunOptions, RunRecord, Stepper};
pub use sampling::{nestt_e_parameters, nestt_g_parameters, NesttParams, Sampling, ScheduleSpec};
