//! Cost-optimal multi-step Grover search for search sets with a known prior.
//!
//! A search runs a sequence of steps, each preparing a biased initial state,
//! applying `m` Grover iterations and measuring. If the first `n - 1` steps
//! all miss, a plain Grover search of `(pi/4) sqrt(N)` iterations finishes
//! the job. The [`optimizer`] picks per-step iteration counts and per-index
//! final angles that minimize the prior-weighted expected iteration count;
//! [`montecarlo`] and [`statevector`] check the result independently.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod optimizer;
pub mod prior;
pub mod report;
pub mod schedule;
pub mod statevector;

pub use error::{Error, Result};
pub use montecarlo::{simulate, success_step_histogram, SimulationMode, SimulationReport};
pub use optimizer::{
    downstream_weight, optimize, solve_theta, sweep_step, LambdaInit, OptimizerConfig, OptimizerState, StepResiduals,
    Warning,
};
pub use prior::{discretize, index_stddev, permute, DistributionSpec, Family, Prior};
pub use report::{build_table, fit_linear, improvement, FitResult, TableRow};
pub use schedule::{
    coefficients_from_angles, constraint_residual, expected_cost, success_probability, CostBreakdown, Plan, Schedule,
};
pub use statevector::{apply_oracle, apply_reflection, grover_success_probability, AmplitudeVector};
