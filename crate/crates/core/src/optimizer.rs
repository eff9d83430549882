//! Lagrange-multiplier optimization of a multi-step schedule.
//!
//! For every optimized step `l` the stationary point of
//! `E - sum_j lambda_j (sum_i theta_ij^2 - 4 m_j^2)` satisfies
//!
//! ```text
//! sum_i p_i prod_{k<l} cos^2 theta_ik        = 8 lambda_l m_l          (multiplier)
//! sum_i theta_il^2                           = 4 m_l^2                 (constraint)
//! p_i cos theta_il sin theta_il S_il         = lambda_l theta_il       (stationarity)
//! ```
//!
//! where `S_il` is the iteration count still expected after step `l` if step
//! `l` were certain to fail ([`downstream_weight`]). The solver sweeps
//! `l = 1..n-1`, enforcing stationarity, then the constraint, then the
//! multiplier relation, and repeats full sweeps until `E` stops moving. A
//! refinement phase then alternates [`relax_indices`] with full sweeps until
//! the stationarity residuals are small as well.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum_by;
use crate::prior::Prior;
use crate::schedule::{failure_probability, Schedule};

/// Largest prior mass for which the small-angle constraint is trusted.
pub const SMALL_ANGLE_MASS_LIMIT: f64 = 0.1;

/// Full sweeps following each index relaxation in the refinement phase.
const REFINEMENT_SWEEPS: usize = 2;

/// Maximum number of times a collapsed step halves its multiplier.
pub const MAX_LAMBDA_HALVINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaInit {
    /// `1 / (8 sqrt(N))` for every step.
    Scaled,
    Value(f64),
}

impl LambdaInit {
    fn value(self, size: usize) -> f64 {
        match self {
            LambdaInit::Scaled => 1.0 / (8.0 * (size as f64).sqrt()),
            LambdaInit::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Relative tolerance on the angle. Near the support threshold roots get
    /// small, and an absolute tolerance would leave them loose.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-12,
            max_steps: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Total steps including the final Grover step.
    pub steps: usize,
    /// Absolute change in `E` between full sweeps at which iteration halts.
    pub tol_e: f64,
    pub max_outer_iterations: usize,
    pub root: RootOptions,
    pub lambda_init: LambdaInit,
    /// Per-index pass limit of [`relax_indices`]; zero disables the refinement
    /// phase and halts on the `E` criterion alone.
    pub relaxation_passes: usize,
    /// Largest stationarity residual accepted by the refinement phase.
    pub stationarity_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            steps: 10,
            tol_e: 1e-6,
            max_outer_iterations: 10_000,
            root: RootOptions::default(),
            lambda_init: LambdaInit::Scaled,
            relaxation_passes: 100,
            stationarity_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        if !(self.tol_e > 0.0) {
            return bad(format!("tolE must be positive, got {}", self.tol_e));
        }
        if !(self.stationarity_tol > 0.0) {
            return bad(format!(
                "stationarity tolerance must be positive, got {}",
                self.stationarity_tol
            ));
        }
        if !(self.root.tol > 0.0) {
            return bad(format!("Newton tolerance must be positive, got {}", self.root.tol));
        }
        if self.root.max_steps == 0 || self.max_outer_iterations == 0 {
            return bad("iteration limits must be positive".into());
        }
        if let LambdaInit::Value(v) = self.lambda_init {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("initial multiplier must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warning {
    /// Some `p_i` exceeds [`SMALL_ANGLE_MASS_LIMIT`]; the small-angle
    /// constraint behind the optimality system is unreliable.
    ConcentratedPrior,
    NotConverged,
}

/// Relative violations of the three optimality conditions for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepResiduals {
    pub multiplier: f64,
    pub constraint: f64,
    /// Maximum over indices with a nonzero angle.
    pub stationarity: f64,
    /// Largest relative excess `(pS - lambda) / lambda` over indices held at a
    /// zero angle; positive means a zero angle should open.
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub lambda: Vec<f64>,
    pub schedule: Schedule,
    pub expected_cost: f64,
    /// `|E|` change over the last full sweep.
    pub delta_e: f64,
    pub residuals: Vec<StepResiduals>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub warnings: Vec<Warning>,
    /// `E` after every full sweep.
    pub cost_history: Vec<f64>,
    /// Cached `cos^2 theta` per optimized step, kept in sync with `schedule`.
    failure: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Inactive steps (`m = 0`, all angles zero) with every multiplier set by `init`.
    pub fn initial(prior: &Prior, steps: usize, init: LambdaInit) -> Result<OptimizerState> {
        let schedule = Schedule::inactive(prior.len(), steps)?;
        Ok(OptimizerState::from_schedule(
            schedule,
            vec![init.value(prior.len()); steps - 1],
        ))
    }

    pub fn from_schedule(schedule: Schedule, lambda: Vec<f64>) -> OptimizerState {
        let failure = schedule
            .angles()
            .iter()
            .map(|row| row.iter().map(|&t| failure_probability(t)).collect())
            .collect();
        OptimizerState {
            residuals: vec![StepResiduals::default(); lambda.len()],
            lambda,
            expected_cost: schedule.final_iterations(),
            delta_e: f64::INFINITY,
            schedule,
            outer_iterations: 0,
            converged: false,
            warnings: Vec::new(),
            cost_history: Vec::new(),
            failure,
        }
    }

    fn refresh_cost(&mut self, prior: &Prior) {
        let p = prior.probabilities();
        let m = self.schedule.iterations();
        let m_final = self.schedule.final_iterations();
        let failure = &self.failure;
        self.expected_cost = pairwise_sum_by(p.len(), |i| {
            let mut surv = 1.0;
            let mut cost = 0.0;
            for (mj, row) in m.iter().zip(failure) {
                cost += mj * surv;
                surv *= row[i];
            }
            p[i] * (cost + m_final * surv)
        });
    }

    /// Probability that steps `1..step` (exclusive) all fail, per index.
    fn prefix_survival(&self, step: usize) -> Vec<f64> {
        let mut pre = vec![1.0; self.schedule.size()];
        for row in &self.failure[..step - 1] {
            for (a, f) in pre.iter_mut().zip(row) {
                *a *= f;
            }
        }
        pre
    }

    /// Expected iterations from step `step + 1` onward given that step is reached
    /// and fails, per index.
    fn tail_cost(&self, step: usize) -> Vec<f64> {
        let m = self.schedule.iterations();
        let mut tail = vec![self.schedule.final_iterations(); self.schedule.size()];
        for j in (step..m.len()).rev() {
            let row = &self.failure[j];
            for (t, f) in tail.iter_mut().zip(row) {
                *t = m[j] + f * *t;
            }
        }
        tail
    }
}

/// `S_il = sum_{j>l} m_j prod_{k<j, k != l} cos^2 theta_ik`, including the final step.
pub fn downstream_weight(schedule: &Schedule, step: usize, index: usize) -> Result<f64> {
    schedule.check_step(step)?;
    if index >= schedule.size() {
        return Err(Error::IndexOutOfRange {
            index,
            size: schedule.size(),
        });
    }
    let m = schedule.iterations();
    let theta = schedule.angles();
    let mut pre = 1.0;
    for row in &theta[..step - 1] {
        pre *= failure_probability(row[index]);
    }
    let mut tail = schedule.final_iterations();
    for j in (step..m.len()).rev() {
        tail = m[j] + failure_probability(theta[j][index]) * tail;
    }
    Ok(pre * tail)
}

/// [`downstream_weight`] for every index of one step.
pub fn downstream_weights(schedule: &Schedule, step: usize) -> Result<Vec<f64>> {
    schedule.check_step(step)?;
    let state = OptimizerState::from_schedule(schedule.clone(), vec![0.0; schedule.optimized_steps()]);
    let pre = state.prefix_survival(step);
    let tail = state.tail_cost(step);
    Ok(pre.iter().zip(&tail).map(|(a, b)| a * b).collect())
}

/// Root of `(pS/2) sin 2theta = lambda theta` in `(0, pi/2)`, or zero when
/// `pS <= lambda` and only the trivial root exists.
pub fn solve_theta(ps: f64, lambda: f64) -> Result<f64> {
    solve_theta_with(ps, lambda, None, &RootOptions::default())
}

/// [`solve_theta`] with explicit tolerances and an optional starting point.
///
/// The left side is strictly concave on `(0, pi/2)`, so from any start a
/// Newton step lands on the right of the root and the iterates then decrease
/// monotonically. A step that leaves the bracket falls back to bisection.
pub fn solve_theta_with(ps: f64, lambda: f64, guess: Option<f64>, opts: &RootOptions) -> Result<f64> {
    if !(ps > lambda * (1.0 + 1e-15)) {
        return Ok(0.0);
    }
    // Scaled residual h(t) = sin(2t)/2 - r t with r = lambda / pS in (0, 1).
    // Written as t (1 - r) - (t - sin(2t)/2) to keep precision near t = 0.
    let gap = (ps - lambda) / ps;
    let r = lambda / ps;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    let mut t = match guess {
        Some(g) if g > 0.0 && g < FRAC_PI_2 => g,
        _ => FRAC_PI_4,
    };
    for _ in 0..opts.max_steps {
        let (sin2, cos2) = libm::sincos(2.0 * t);
        let value = t * gap - excess(t, sin2);
        if value > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = cos2 - r;
        let step = value / slope;
        // Newton leaves an error of about (h'' / 2h') step^2 with h'' = -2 sin 2t;
        // stop once that is well inside the tolerance instead of paying for
        // another evaluation to see the step vanish.
        if step.abs() <= opts.tol * t || (sin2 / slope).abs() * step * step <= 0.01 * opts.tol * t {
            return Ok((t - step).clamp(lo, hi));
        }
        let mut next = t - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if hi - lo <= opts.tol * hi {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::RootNotConverged {
        steps: opts.max_steps,
        ps,
        lambda,
    })
}

/// `t - sin(2t)/2` given `sin2 = sin(2t)`, with a series near zero where the
/// difference cancels.
fn excess(t: f64, sin2: f64) -> f64 {
    if t < 0.05 {
        // (2/3)t^3 - (2/15)t^5 + (4/315)t^7 - (2/2835)t^9
        let t2 = t * t;
        t * t2 * (2.0 / 3.0 + t2 * (-2.0 / 15.0 + t2 * (4.0 / 315.0 - t2 * (2.0 / 2835.0))))
    } else {
        t - 0.5 * sin2
    }
}

/// One coordinate update of a 1-based step: angles from the stationarity
/// condition, `m` from the constraint, then the multiplier from its relation.
pub fn sweep_step(state: &mut OptimizerState, prior: &Prior, step: usize, root: &RootOptions) -> Result<()> {
    state.schedule.check_step(step)?;
    if prior.len() != state.schedule.size() {
        return Err(Error::DimensionMismatch {
            expected: state.schedule.size(),
            actual: prior.len(),
        });
    }
    let p = prior.probabilities();
    let pre = state.prefix_survival(step);
    let tail = state.tail_cost(step);
    let previous = &state.schedule.angles()[step - 1];

    let mut lambda = state.lambda[step - 1];
    let mut theta = vec![0.0; p.len()];
    let mut halvings = 0;
    let m = loop {
        for i in 0..p.len() {
            let ps = p[i] * pre[i] * tail[i];
            let guess = (previous[i] > 0.0).then_some(previous[i]);
            theta[i] = solve_theta_with(ps, lambda, guess, root)?;
        }
        let m = 0.5 * pairwise_sum_by(theta.len(), |i| theta[i] * theta[i]).sqrt();
        if m > 0.0 {
            break m;
        }
        if halvings == MAX_LAMBDA_HALVINGS {
            return Err(Error::CollapsedStep {
                step,
                retries: halvings,
            });
        }
        lambda *= 0.5;
        halvings += 1;
    };

    let reach = pairwise_sum_by(p.len(), |i| p[i] * pre[i]);
    state.lambda[step - 1] = reach / (8.0 * m);
    state.failure[step - 1] = theta.iter().map(|&t| failure_probability(t)).collect();
    state.schedule.set_step(step, m, theta);
    Ok(())
}

/// Newton iterations tried on one index before falling back to Gauss-Seidel.
const NEWTON_POLISH_STEPS: usize = 8;

/// The stationarity conditions of a single index with `m` and the
/// multipliers frozen. They are the gradient of
/// `F(theta) = p sum_j w_j prod_{k<j} cos^2 theta_k + sum_l lambda_l theta_l^2`,
/// where `w` lists every step's iterations including the final step.
struct IndexProblem<'a> {
    p: f64,
    weights: &'a [f64],
    lambda: &'a [f64],
}

struct IndexScratch {
    cos_sq: Vec<f64>,
    prefix: Vec<f64>,
    tails: Vec<f64>,
    active: Vec<usize>,
    hessian: Vec<f64>,
    rhs: Vec<f64>,
}

impl IndexScratch {
    fn new(steps: usize) -> IndexScratch {
        IndexScratch {
            cos_sq: vec![0.0; steps],
            prefix: vec![0.0; steps],
            tails: vec![0.0; steps],
            active: Vec::with_capacity(steps),
            hessian: vec![0.0; steps * steps],
            rhs: vec![0.0; steps],
        }
    }
}

impl IndexProblem<'_> {
    /// One forward pass of exact single-angle solves; returns the largest move.
    fn gauss_seidel(&self, theta: &mut [f64], sc: &mut IndexScratch, root: &RootOptions) -> Result<f64> {
        // A forward pass only changes angles behind the current step, so
        // tails taken at the start of the pass stay exact.
        self.factor(theta, sc);
        let mut pre = 1.0;
        let mut moved: f64 = 0.0;
        for (l, t) in theta.iter_mut().enumerate() {
            let old = *t;
            let new = solve_theta_with(
                self.p * pre * sc.tails[l],
                self.lambda[l],
                (old > 0.0).then_some(old),
                root,
            )?;
            moved = moved.max((new - old).abs());
            *t = new;
            pre *= failure_probability(new);
        }
        Ok(moved)
    }

    /// Fills `cos_sq`, `prefix[l] = prod_{i<l} cos^2` and
    /// `tails[l] = sum_{j>l} w_j prod_{l<i<j} cos^2`, so that
    /// `S_l = prefix[l] tails[l]` and, for `l < k`,
    /// `S_lk = prefix[l] (prod_{l<i<k} cos^2) tails[k]`.
    fn factor(&self, theta: &[f64], sc: &mut IndexScratch) {
        let steps = theta.len();
        for (c, &t) in sc.cos_sq.iter_mut().zip(theta) {
            *c = failure_probability(t);
        }
        let mut pre = 1.0;
        for l in 0..steps {
            sc.prefix[l] = pre;
            pre *= sc.cos_sq[l];
        }
        let mut t = self.weights[steps];
        for l in (0..steps).rev() {
            sc.tails[l] = t;
            t = self.weights[l] + sc.cos_sq[l] * t;
        }
    }

    /// Newton's method on the nonzero angles. Gives up, returning `false`,
    /// as soon as the Hessian stops being positive definite, an angle leaves
    /// `(0, pi/2)`, or a zero angle would want to become nonzero. Angles may
    /// have moved on failure; they are still a valid starting point.
    fn newton(&self, theta: &mut [f64], sc: &mut IndexScratch, tol: f64, max_steps: usize) -> bool {
        let steps = theta.len();
        sc.active.clear();
        sc.active.extend((0..steps).filter(|&l| theta[l] > 0.0));
        let k = sc.active.len();
        if k == 0 {
            return false;
        }
        for _ in 0..max_steps {
            self.factor(theta, sc);
            for (l, &t) in theta.iter().enumerate() {
                if t == 0.0 && self.p * sc.prefix[l] * sc.tails[l] > self.lambda[l] {
                    return false;
                }
            }
            for (a, &l) in sc.active.iter().enumerate() {
                let (sin2, cos2) = libm::sincos(2.0 * theta[l]);
                let s_l = sc.prefix[l] * sc.tails[l];
                sc.rhs[a] = self.p * sin2 * s_l - 2.0 * self.lambda[l] * theta[l];
                sc.hessian[a * k + a] = 2.0 * self.lambda[l] - 2.0 * self.p * cos2 * s_l;
                let scale = self.p * sin2 * sc.prefix[l];
                let mut between = 1.0;
                let mut next = l + 1;
                for (b, &j) in sc.active.iter().enumerate().skip(a + 1) {
                    while next < j {
                        between *= sc.cos_sq[next];
                        next += 1;
                    }
                    let h = scale * (2.0 * theta[j]).sin() * between * sc.tails[j];
                    sc.hessian[a * k + b] = h;
                    sc.hessian[b * k + a] = h;
                }
            }
            if !cholesky_solve(&mut sc.hessian[..k * k], &mut sc.rhs[..k], k) {
                return false;
            }
            let mut converged = true;
            for (a, &l) in sc.active.iter().enumerate() {
                let next = theta[l] + sc.rhs[a];
                if !(next > 0.0 && next < FRAC_PI_2) {
                    return false;
                }
                converged &= sc.rhs[a].abs() <= tol * next;
                theta[l] = next;
            }
            if converged {
                return true;
            }
        }
        false
    }
}

/// Solves `A x = b` in place for a symmetric `n x n` row-major `A`, leaving
/// `x` in `b`. Returns `false` if `A` is not positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    true
}

/// Per-index relaxation with every `m` and multiplier held fixed.
///
/// The stationarity conditions of different indices only interact through
/// `m` and the multipliers, so with those frozen each index is an independent
/// problem over its own angles. A full sweep gives every index one
/// Gauss-Seidel pass per step; indices whose angles move between steps need
/// many passes, which this does in place. The constraint and multiplier
/// relations are then restored step by step.
///
/// Returns `false`, leaving the state untouched, if a step would lose every
/// angle.
pub fn relax_indices(state: &mut OptimizerState, prior: &Prior, root: &RootOptions, max_passes: usize) -> Result<bool> {
    let p = prior.probabilities();
    if p.len() != state.schedule.size() {
        return Err(Error::DimensionMismatch {
            expected: state.schedule.size(),
            actual: p.len(),
        });
    }
    let m = state.schedule.iterations();
    let m_final = state.schedule.final_iterations();
    let lambda = &state.lambda;
    let steps = m.len();
    let mut theta = state.schedule.angles().to_vec();
    let mut failure = state.failure.clone();

    let mut weights = m.to_vec();
    weights.push(m_final);
    let mut column = vec![0.0; steps];
    let mut scratch = IndexScratch::new(steps);
    for i in 0..p.len() {
        for (l, t) in column.iter_mut().enumerate() {
            *t = theta[l][i];
        }
        let problem = IndexProblem {
            p: p[i],
            weights: &weights,
            lambda,
        };
        for _ in 0..max_passes {
            let moved = problem.gauss_seidel(&mut column, &mut scratch, root)?;
            if moved <= root.tol {
                break;
            }
            // Gauss-Seidel is only linear; finish with Newton when it is safe.
            if problem.newton(&mut column, &mut scratch, root.tol, NEWTON_POLISH_STEPS) {
                break;
            }
        }
        for (l, &t) in column.iter().enumerate() {
            theta[l][i] = t;
            failure[l][i] = failure_probability(t);
        }
    }

    let mut new_m = Vec::with_capacity(steps);
    for row in &theta {
        let mj = 0.5 * pairwise_sum_by(row.len(), |i| row[i] * row[i]).sqrt();
        if !(mj > 0.0) {
            return Ok(false);
        }
        new_m.push(mj);
    }
    let mut pre = vec![1.0; p.len()];
    for (l, (row, mj)) in theta.into_iter().zip(new_m).enumerate() {
        let reach = pairwise_sum_by(p.len(), |i| p[i] * pre[i]);
        state.lambda[l] = reach / (8.0 * mj);
        for (a, f) in pre.iter_mut().zip(&failure[l]) {
            *a *= f;
        }
        state.schedule.set_step(l + 1, mj, row);
    }
    state.failure = failure;
    Ok(true)
}

/// Relative violations of the optimality conditions at the current state.
pub fn optimality_residuals(state: &OptimizerState, prior: &Prior) -> Vec<StepResiduals> {
    let p = prior.probabilities();
    let m = state.schedule.iterations();
    (1..=m.len())
        .map(|step| {
            let mj = m[step - 1];
            let lambda = state.lambda[step - 1];
            let theta = &state.schedule.angles()[step - 1];
            let pre = state.prefix_survival(step);
            let tail = state.tail_cost(step);

            let reach = pairwise_sum_by(p.len(), |i| p[i] * pre[i]);
            let multiplier = relative(reach, 8.0 * lambda * mj);
            let norm = pairwise_sum_by(theta.len(), |i| theta[i] * theta[i]);
            let constraint = relative(norm, 4.0 * mj * mj);
            let stationarity = theta
                .iter()
                .enumerate()
                .filter(|(_, &t)| t > 0.0)
                .map(|(i, &t)| {
                    let lhs = p[i] * t.cos() * t.sin() * pre[i] * tail[i];
                    relative(lhs, lambda * t)
                })
                .fold(0.0, f64::max);
            let complementarity = theta
                .iter()
                .enumerate()
                .filter(|(_, &t)| t == 0.0)
                .map(|(i, _)| (p[i] * pre[i] * tail[i] - lambda) / lambda)
                .fold(0.0, f64::max);
            StepResiduals {
                multiplier,
                constraint,
                stationarity,
                complementarity,
            }
        })
        .collect()
}

fn worst_stationarity(state: &OptimizerState, prior: &Prior) -> f64 {
    optimality_residuals(state, prior)
        .iter()
        .map(|r| r.stationarity)
        .fold(0.0, f64::max)
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// One full sweep over every optimized step followed by a cost refresh.
pub fn sweep(state: &mut OptimizerState, prior: &Prior, root: &RootOptions) -> Result<()> {
    for step in 1..=state.schedule.optimized_steps() {
        sweep_step(state, prior, step, root)?;
    }
    let before = state.expected_cost;
    state.refresh_cost(prior);
    state.delta_e = (state.expected_cost - before).abs();
    state.cost_history.push(state.expected_cost);
    state.outer_iterations += 1;
    Ok(())
}

/// Runs full sweeps until `E` changes by less than `tol_e`, then refines
/// until the stationarity residuals are below `stationarity_tol`. Hitting the
/// iteration limit returns the state flagged non-converged, not an error.
pub fn optimize(prior: &Prior, config: &OptimizerConfig) -> Result<OptimizerState> {
    config.validate()?;
    let mut state = OptimizerState::initial(prior, config.steps, config.lambda_init)?;
    if prior.max_probability() > SMALL_ANGLE_MASS_LIMIT {
        state.warnings.push(Warning::ConcentratedPrior);
    }
    if config.steps == 1 {
        state.refresh_cost(prior);
        state.delta_e = 0.0;
        state.converged = true;
        return Ok(state);
    }
    let mut halted = false;
    while state.outer_iterations < config.max_outer_iterations {
        sweep(&mut state, prior, &config.root)?;
        // the first sweep moves away from the inactive start and is not a convergence signal
        if state.outer_iterations > 1 && state.delta_e < config.tol_e {
            halted = true;
            break;
        }
    }
    // E flattens long before every index settles; refine until the
    // stationarity conditions hold as well. The plain sweeps after each
    // relaxation damp the collective drift of m that relaxation alone
    // excites when many indices share one configuration.
    if halted && config.relaxation_passes > 0 {
        loop {
            let worst = worst_stationarity(&state, prior);
            if state.delta_e < config.tol_e && worst <= config.stationarity_tol {
                break;
            }
            if state.outer_iterations + REFINEMENT_SWEEPS > config.max_outer_iterations {
                halted = false;
                break;
            }
            relax_indices(&mut state, prior, &config.root, config.relaxation_passes)?;
            for _ in 0..REFINEMENT_SWEEPS {
                sweep(&mut state, prior, &config.root)?;
            }
        }
    }
    state.converged = halted;
    if !state.converged {
        state.warnings.push(Warning::NotConverged);
    }
    state.residuals = optimality_residuals(&state, prior);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{discretize, DistributionSpec, Family};
    use crate::schedule::{expected_cost, final_step_iterations};
    use std::f64::consts::PI;

    fn bisect_theta(ps: f64, lambda: f64) -> f64 {
        let g = |t: f64| 0.5 * ps * (2.0 * t).sin() - lambda * t;
        let (mut lo, mut hi) = (1e-300, FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn trivial_root_below_threshold() {
        assert_eq!(solve_theta(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(solve_theta(0.5, 1.0).unwrap(), 0.0);
        assert_eq!(solve_theta(0.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn quarter_turn_root() {
        let ps = 3.7;
        let t = solve_theta(ps, 2.0 / PI * ps).unwrap();
        assert!((t - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn root_matches_bisection_near_threshold() {
        for &r in &[0.5, 0.9, 0.999, 1.0 - 1e-6, 1.0 - 1e-10] {
            let t = solve_theta(1.0, r).unwrap();
            let b = bisect_theta(1.0, r);
            assert!((t - b).abs() < 1e-10, "r={r}: {t} vs {b}");
        }
    }

    #[test]
    fn warm_start_reaches_same_root() {
        let opts = RootOptions::default();
        let cold = solve_theta_with(2.0, 0.3, None, &opts).unwrap();
        for g in [1e-6, 0.2, 1.0, 1.5] {
            let warm = solve_theta_with(2.0, 0.3, Some(g), &opts).unwrap();
            assert!((warm - cold).abs() < 1e-12);
        }
    }

    #[test]
    fn downstream_weight_two_steps() {
        let s = Schedule::new(3, vec![2.0], vec![vec![0.3, 0.7, 1.1]]).unwrap();
        for i in 0..3 {
            assert!((downstream_weight(&s, 1, i).unwrap() - s.final_iterations()).abs() < 1e-15);
        }
        assert!(downstream_weight(&s, 2, 0).is_err());
        assert!(downstream_weight(&s, 1, 3).is_err());
    }

    #[test]
    fn downstream_weight_against_direct_sum() {
        let theta = vec![
            vec![0.2, FRAC_PI_2, 0.0, 1.0],
            vec![0.5, 0.1, FRAC_PI_2, 0.3],
            vec![0.9, 0.4, 0.6, 0.0],
            vec![0.1, 0.2, 0.3, 0.4],
        ];
        let m = vec![1.0, 2.0, 0.5, 3.0];
        let s = Schedule::new(4, m.clone(), theta.clone()).unwrap();
        let m_final = s.final_iterations();
        let n = m.len() + 1;
        for l in 1..n {
            let vector = downstream_weights(&s, l).unwrap();
            for i in 0..4 {
                // term by term over j = l+1..n, k < j, k != l
                let mut direct = 0.0;
                for j in (l + 1)..=n {
                    let mj = if j == n { m_final } else { m[j - 1] };
                    let mut prod = 1.0;
                    for k in 1..j {
                        if k != l {
                            prod *= theta[k - 1][i].cos().powi(2);
                        }
                    }
                    direct += mj * prod;
                }
                let w = downstream_weight(&s, l, i).unwrap();
                assert!((w - direct).abs() < 1e-12 * direct.max(1.0), "l={l} i={i}");
                assert!((vector[i] - direct).abs() < 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn first_sweep_is_positive() {
        let prior = Prior::new(vec![1.0; 1000], "uniform").unwrap();
        let mut state = OptimizerState::initial(&prior, 10, LambdaInit::Scaled).unwrap();
        sweep_step(&mut state, &prior, 1, &RootOptions::default()).unwrap();
        assert!(state.schedule.iterations()[0] > 0.0);
        assert!(state.lambda[0] > 0.0);
    }

    #[test]
    fn collapsed_step_recovers_by_halving() {
        let prior = Prior::new(vec![1.0; 100], "uniform").unwrap();
        let mut state = OptimizerState::initial(&prior, 2, LambdaInit::Value(1e3)).unwrap();
        sweep_step(&mut state, &prior, 1, &RootOptions::default()).unwrap();
        assert!(state.schedule.iterations()[0] > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.tol_e = 0.0;
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            lambda_init: LambdaInit::Value(-1.0),
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_step_config_is_plain_grover() {
        let prior = Prior::new(vec![1.0; 64], "uniform").unwrap();
        let config = OptimizerConfig {
            steps: 1,
            ..OptimizerConfig::default()
        };
        let state = optimize(&prior, &config).unwrap();
        assert!(state.converged);
        assert!((state.expected_cost - final_step_iterations(64)).abs() < 1e-12);
    }

    #[test]
    fn concentrated_prior_is_flagged() {
        let mut w = vec![1.0; 100];
        w[0] = 50.0;
        let prior = Prior::new(w, "spike").unwrap();
        let state = optimize(&prior, &OptimizerConfig::default()).unwrap();
        assert!(state.warnings.contains(&Warning::ConcentratedPrior));
    }

    #[test]
    fn zero_mass_indices_keep_zero_angles() {
        let mut w = vec![1.0; 400];
        for k in (0..400).step_by(3) {
            w[k] = 0.0;
        }
        let prior = Prior::new(w, "holes").unwrap();
        let state = optimize(&prior, &OptimizerConfig::default()).unwrap();
        for row in state.schedule.angles() {
            for k in (0..400).step_by(3) {
                assert_eq!(row[k], 0.0);
            }
        }
    }

    #[test]
    fn uniform_small_instance_matches_rerun_limit() {
        // Repeating a fixed step with x = 2m/sqrt(N) costs (sqrt(N)/2) x / sin^2 x,
        // minimized at tan x = 2x; ten steps sit essentially at that limit.
        let n = 10_000;
        let prior = Prior::new(vec![1.0; n], "uniform").unwrap();
        let state = optimize(&prior, &OptimizerConfig::default()).unwrap();
        assert!(state.converged);
        let mut x: f64 = 1.16;
        for _ in 0..50 {
            x -= (x.tan() - 2.0 * x) / (1.0 / x.cos().powi(2) - 2.0);
        }
        let limit = 0.5 * x / x.sin().powi(2);
        let ratio = state.expected_cost / (n as f64).sqrt();
        assert!((ratio - limit).abs() < 1e-3, "{ratio} vs {limit}");
        let e = expected_cost(&state.schedule, &prior).unwrap().expected;
        assert!((e - state.expected_cost).abs() < 1e-9 * e);
    }

    #[test]
    fn cholesky_solves_spd_and_rejects_indefinite() {
        let mut a = vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|k| a[i * 3 + k] * x[k]).sum()).collect();
        assert!(cholesky_solve(&mut a, &mut b, 3));
        for (got, want) in b.iter().zip(x) {
            assert!((got - want).abs() < 1e-14);
        }
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        let mut b = vec![1.0, 1.0];
        assert!(!cholesky_solve(&mut a, &mut b, 2));
    }

    /// Weights plus multipliers chosen so that `target` is stationary.
    fn index_problem(p: f64, weights: &[f64], target: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let weights = weights.to_vec();
        let probe = IndexProblem {
            p,
            weights: &weights,
            lambda: &[],
        };
        let mut sc = IndexScratch::new(target.len());
        probe.factor(target, &mut sc);
        let lambda = (0..target.len())
            .map(|l| p * sc.prefix[l] * sc.tails[l] * target[l].sin() * target[l].cos() / target[l])
            .collect();
        (weights, lambda)
    }

    #[test]
    fn newton_and_gauss_seidel_return_to_the_same_minimum() {
        // positive-definite Hessian at the target
        let target = [0.66, 1.47, 1.46];
        let (weights, lambda) = index_problem(0.001, &[7.2, 8.3, 9.8, 85.0], &target);
        let problem = IndexProblem {
            p: 0.001,
            weights: &weights,
            lambda: &lambda,
        };
        let root = RootOptions::default();
        let mut sc = IndexScratch::new(3);
        let start = [0.67, 1.46, 1.45];

        let mut gs = start.to_vec();
        for _ in 0..5000 {
            if problem.gauss_seidel(&mut gs, &mut sc, &root).unwrap() < 1e-15 {
                break;
            }
        }
        let mut nt = start.to_vec();
        assert!(problem.newton(&mut nt, &mut sc, 1e-14, 20));
        for l in 0..3 {
            assert!((gs[l] - target[l]).abs() < 1e-12, "{gs:?}");
            assert!((nt[l] - target[l]).abs() < 1e-12, "{nt:?}");
        }
    }

    #[test]
    fn newton_declines_saddles_and_opening_angles() {
        // nearly interchangeable steps: the stationary point is a saddle
        let target = [0.3, 0.25, 0.2];
        let (weights, lambda) = index_problem(0.001, &[1.0, 1.0, 1.0, 100.0], &target);
        let problem = IndexProblem {
            p: 0.001,
            weights: &weights,
            lambda: &lambda,
        };
        let mut sc = IndexScratch::new(3);
        assert!(!problem.newton(&mut target.to_vec(), &mut sc, 1e-14, 20));
        assert!(!problem.newton(&mut [0.3, 0.0, 0.2], &mut sc, 1e-14, 20));
        assert!(!problem.newton(&mut [0.0; 3], &mut sc, 1e-14, 20));
    }

    #[test]
    fn refinement_drives_stationarity_down() {
        let prior = discretize(&DistributionSpec::new(Family::Power(3), 2000)).unwrap();
        let sweeps_only = OptimizerConfig {
            relaxation_passes: 0,
            ..OptimizerConfig::default()
        };
        let coarse = optimize(&prior, &sweeps_only).unwrap();
        let refined = optimize(&prior, &OptimizerConfig::default()).unwrap();
        let worst = |s: &OptimizerState| s.residuals.iter().map(|r| r.stationarity).fold(0.0, f64::max);
        assert!(refined.converged);
        assert!(worst(&refined) <= OptimizerConfig::default().stationarity_tol);
        assert!(worst(&coarse) > worst(&refined));
        assert!(refined.expected_cost <= coarse.expected_cost + 1e-9);
    }

    #[test]
    fn relaxation_restores_constraint_and_multipliers() {
        let prior = discretize(&DistributionSpec::new(Family::Exponential(30.0), 1000)).unwrap();
        let config = OptimizerConfig {
            relaxation_passes: 0,
            ..OptimizerConfig::default()
        };
        let mut state = optimize(&prior, &config).unwrap();
        assert!(relax_indices(&mut state, &prior, &config.root, 100).unwrap());
        for r in optimality_residuals(&state, &prior) {
            assert!(r.constraint < 1e-13, "{r:?}");
            assert!(r.multiplier < 1e-13, "{r:?}");
        }
    }
}
