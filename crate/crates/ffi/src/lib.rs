//! C ABI over `priorsearch`.
//!
//! Priors, optimization results and plans cross the boundary as opaque
//! handles; each has a matching `*_free`. Fallible calls return a
//! [`PsStatus`] and write their result through an out-pointer. After a
//! failure, [`ps_last_error`] describes it until the next call on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use priorsearch::optimizer::{LambdaInit, OptimizerConfig, OptimizerState, RootOptions, Warning};
use priorsearch::prior::{discretize, DistributionSpec, Family, Prior};
use priorsearch::schedule::{expected_cost_value, read_plan, write_plan, Plan};
use priorsearch::statevector::closed_form_success_probability;
use priorsearch::{montecarlo, report, Error, SimulationMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The optimizer or root solver could not make progress.
    Numerical = 3,
    Io = 4,
    Parse = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Discretized prior over the search set.
pub struct PsPrior(Prior);

/// Outcome of [`ps_optimize`].
pub struct PsOptimization(OptimizerState);

/// Schedule plus per-step multipliers, as stored in plan files.
pub struct PsPlan(Plan);

/// Optimizer settings. Obtain defaults from [`ps_optimizer_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsOptimizerConfig {
    /// Total steps including the final Grover step.
    pub steps: usize,
    pub tol_e: f64,
    pub max_outer_iterations: usize,
    /// Relative tolerance of the per-index angle solve.
    pub root_tol: f64,
    pub root_max_steps: usize,
    /// Initial multiplier for every step; `<= 0` selects `1 / (8 sqrt(N))`.
    pub lambda_init: f64,
    /// Per-index passes in the refinement phase; 0 disables refinement.
    pub relaxation_passes: usize,
    pub stationarity_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PsOptimizationSummary {
    pub expected_cost: f64,
    pub delta_e: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Some index carries more than 0.1 of the prior mass.
    pub concentrated_prior: bool,
    pub max_multiplier_residual: f64,
    pub max_constraint_residual: f64,
    pub max_stationarity_residual: f64,
    /// Positive when some zero angle should open.
    pub max_complementarity_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PsSimulation {
    pub trials: u64,
    pub mean_iterations: f64,
    pub stderr: f64,
    pub analytic_e: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) => PsStatus::Io,
            Error::Parse { .. } => PsStatus::Parse,
            Error::RootNotConverged { .. } | Error::CollapsedStep { .. } => PsStatus::Numerical,
            _ => PsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PsStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> PsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PsStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(PsStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(PsStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(PsStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != src.len() {
        return Err(invalid(format!("buffer holds {len} values, {} needed", src.len())));
    }
    if len == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure(PsStatus::NullPointer, "output buffer is null".into()));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the most recent failure on this thread, or null.
///
/// The pointer stays valid until the next `ps_*` call on this thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Discretizes a named family (`uniform`, `power:<n>`, `exp:<c>`,
/// `hnorm:<c>`, `custom:<path>`) over `size` indices.
///
/// # Safety
/// `dist` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_discretize(dist: *const c_char, size: usize, out: *mut *mut PsPrior) -> PsStatus {
    guard(|| {
        let family = Family::parse(text(dist, "dist")?)?;
        let prior = discretize(&DistributionSpec::new(family, size))?;
        put(out, boxed(PsPrior(prior)))
    })
}

/// Builds a prior from `len` non-negative weights; they are normalized.
///
/// # Safety
/// `weights` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_from_weights(weights: *const f64, len: usize, out: *mut *mut PsPrior) -> PsStatus {
    guard(|| {
        if weights.is_null() {
            return Err(Failure(PsStatus::NullPointer, "`weights` is null".into()));
        }
        let w = std::slice::from_raw_parts(weights, len).to_vec();
        put(out, boxed(PsPrior(Prior::new(w, "custom")?)))
    })
}

/// Copy of `prior` with indices shuffled by a seeded permutation.
///
/// # Safety
/// `prior` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_permute(prior: *const PsPrior, seed: u64, out: *mut *mut PsPrior) -> PsStatus {
    guard(|| {
        let p = &get(prior, "prior")?.0;
        put(out, boxed(PsPrior(p.permute(seed))))
    })
}

/// Number of indices, or 0 for a null handle.
///
/// # Safety
/// `prior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_len(prior: *const PsPrior) -> usize {
    prior.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the probabilities into `out`, which must hold exactly `len` values.
///
/// # Safety
/// `prior` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_probabilities(prior: *const PsPrior, out: *mut f64, len: usize) -> PsStatus {
    guard(|| copy_out(get(prior, "prior")?.0.probabilities(), out, len))
}

/// Standard deviation of the index under the prior. With `sorted`, indices
/// are first reordered by descending probability.
///
/// # Safety
/// `prior` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_stddev(prior: *const PsPrior, sorted: bool, out: *mut f64) -> PsStatus {
    guard(|| {
        let p = &get(prior, "prior")?.0;
        put(
            out,
            if sorted {
                p.sorted_index_stddev()
            } else {
                p.index_stddev()
            },
        )
    })
}

/// # Safety
/// `prior` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_prior_free(prior: *mut PsPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

#[no_mangle]
pub extern "C" fn ps_optimizer_config_default() -> PsOptimizerConfig {
    let d = OptimizerConfig::default();
    PsOptimizerConfig {
        steps: d.steps,
        tol_e: d.tol_e,
        max_outer_iterations: d.max_outer_iterations,
        root_tol: d.root.tol,
        root_max_steps: d.root.max_steps,
        lambda_init: match d.lambda_init {
            LambdaInit::Scaled => 0.0,
            LambdaInit::Value(v) => v,
        },
        relaxation_passes: d.relaxation_passes,
        stationarity_tol: d.stationarity_tol,
    }
}

impl From<&PsOptimizerConfig> for OptimizerConfig {
    fn from(c: &PsOptimizerConfig) -> Self {
        OptimizerConfig {
            steps: c.steps,
            tol_e: c.tol_e,
            max_outer_iterations: c.max_outer_iterations,
            root: RootOptions {
                tol: c.root_tol,
                max_steps: c.root_max_steps,
            },
            lambda_init: if c.lambda_init > 0.0 {
                LambdaInit::Value(c.lambda_init)
            } else {
                LambdaInit::Scaled
            },
            relaxation_passes: c.relaxation_passes,
            stationarity_tol: c.stationarity_tol,
        }
    }
}

/// Optimizes a schedule for `prior`. A null `config` uses the defaults.
///
/// Running out of outer iterations is not an error: the result is returned
/// with `converged == false` in its summary.
///
/// # Safety
/// `prior` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_optimize(
    prior: *const PsPrior,
    config: *const PsOptimizerConfig,
    out: *mut *mut PsOptimization,
) -> PsStatus {
    guard(|| {
        let p = &get(prior, "prior")?.0;
        let config = config
            .as_ref()
            .map_or_else(OptimizerConfig::default, OptimizerConfig::from);
        let state = priorsearch::optimize(p, &config)?;
        put(out, boxed(PsOptimization(state)))
    })
}

/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_optimization_summary(
    result: *const PsOptimization,
    out: *mut PsOptimizationSummary,
) -> PsStatus {
    guard(|| {
        let s = &get(result, "result")?.0;
        let worst =
            |f: fn(&priorsearch::optimizer::StepResiduals) -> f64| s.residuals.iter().map(f).fold(0.0, f64::max);
        put(
            out,
            PsOptimizationSummary {
                expected_cost: s.expected_cost,
                delta_e: s.delta_e,
                outer_iterations: s.outer_iterations,
                converged: s.converged,
                concentrated_prior: s.warnings.contains(&Warning::ConcentratedPrior),
                max_multiplier_residual: worst(|r| r.multiplier),
                max_constraint_residual: worst(|r| r.constraint),
                max_stationarity_residual: worst(|r| r.stationarity),
                max_complementarity_residual: worst(|r| r.complementarity),
            },
        )
    })
}

/// Extracts the optimized plan as a new handle.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_optimization_plan(result: *const PsOptimization, out: *mut *mut PsPlan) -> PsStatus {
    guard(|| {
        let s = &get(result, "result")?.0;
        let plan = Plan {
            schedule: s.schedule.clone(),
            lambda: s.lambda.clone(),
        };
        put(out, boxed(PsPlan(plan)))
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_optimization_free(result: *mut PsOptimization) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_read(path: *const c_char, out: *mut *mut PsPlan) -> PsStatus {
    guard(|| {
        let file = File::open(text(path, "path")?)?;
        let plan = read_plan(BufReader::new(file))?;
        put(out, boxed(PsPlan(plan)))
    })
}

/// # Safety
/// `plan` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_write(plan: *const PsPlan, path: *const c_char) -> PsStatus {
    guard(|| {
        let plan = &get(plan, "plan")?.0;
        let file = File::create(text(path, "path")?)?;
        write_plan(BufWriter::new(file), plan)?;
        Ok(())
    })
}

/// Total steps `n` including the final Grover step, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_steps(plan: *const PsPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.schedule.steps())
}

/// Search-set size `N`, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_size(plan: *const PsPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.schedule.size())
}

/// Copies the `n - 1` optimized iteration counts into `out`.
///
/// # Safety
/// `plan` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_iterations(plan: *const PsPlan, out: *mut f64, len: usize) -> PsStatus {
    guard(|| copy_out(get(plan, "plan")?.0.schedule.iterations(), out, len))
}

/// Copies the `n - 1` step multipliers into `out`.
///
/// # Safety
/// `plan` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_multipliers(plan: *const PsPlan, out: *mut f64, len: usize) -> PsStatus {
    guard(|| copy_out(&get(plan, "plan")?.0.lambda, out, len))
}

/// Iteration count of the final, unconditional Grover step.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_final_iterations(plan: *const PsPlan, out: *mut f64) -> PsStatus {
    guard(|| put(out, get(plan, "plan")?.0.schedule.final_iterations()))
}

/// Expected number of oracle calls of `plan` under `prior`.
///
/// # Safety
/// `plan` and `prior` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_expected_cost(plan: *const PsPlan, prior: *const PsPrior, out: *mut f64) -> PsStatus {
    guard(|| {
        let e = expected_cost_value(&get(plan, "plan")?.0.schedule, &get(prior, "prior")?.0)?;
        put(out, e)
    })
}

/// Monte-Carlo estimate of the expected cost. `integer_mode` rounds
/// iteration counts to whole oracle calls.
///
/// # Safety
/// `plan` and `prior` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_simulate(
    plan: *const PsPlan,
    prior: *const PsPrior,
    trials: u64,
    seed: u64,
    integer_mode: bool,
    out: *mut PsSimulation,
) -> PsStatus {
    guard(|| {
        let mode = if integer_mode {
            SimulationMode::Integer
        } else {
            SimulationMode::Relaxed
        };
        let r = montecarlo::simulate(
            &get(plan, "plan")?.0.schedule,
            &get(prior, "prior")?.0,
            trials,
            seed,
            mode,
        )?;
        put(
            out,
            PsSimulation {
                trials: r.trials,
                mean_iterations: r.mean_iterations,
                stderr: r.stderr,
                analytic_e: r.analytic_e,
            },
        )
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_plan_free(plan: *mut PsPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// `sin²((2m+1) asin(amplitude))`: success probability after `iterations`
/// Grover iterations from the given solution amplitude.
#[no_mangle]
pub extern "C" fn ps_grover_success_probability(amplitude: f64, iterations: u64) -> f64 {
    closed_form_success_probability(amplitude, iterations)
}

/// Percent saving of `expected_cost` over plain Grover, `(π/4)√N`.
#[no_mangle]
pub extern "C" fn ps_improvement(expected_cost: f64, size: usize) -> f64 {
    report::improvement(expected_cost, size)
}
