//! Multi-step search schedules and their expected iteration cost.
//!
//! A schedule with `n` steps carries `n - 1` optimized steps, each with a
//! (continuous) Grover iteration count `m` and one final angle per index,
//! followed by a fixed standard Grover step of `(pi/4) sqrt(N)` iterations
//! that always succeeds.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::{format_real, pairwise_sum_by};
use crate::prior::{check_order, Prior};

/// Angles this far outside `[0, pi/2]` are clamped; anything further is rejected.
const ANGLE_SLACK: f64 = 1e-9;

/// Iterations of the closing standard Grover step, `(pi/4) sqrt(N)`.
pub fn final_step_iterations(size: usize) -> f64 {
    FRAC_PI_4 * (size as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    size: usize,
    m: Vec<f64>,
    theta: Vec<Vec<f64>>,
    m_final: f64,
}

impl Schedule {
    /// Builds a schedule from per-step iteration counts and final-angle rows.
    ///
    /// A step with `m = 0` is inactive and must have all angles zero.
    pub fn new(size: usize, m: Vec<f64>, theta: Vec<Vec<f64>>) -> Result<Schedule> {
        if size < 1 {
            return Err(Error::InvalidSchedule("empty search set".into()));
        }
        if theta.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                actual: theta.len(),
            });
        }
        let mut theta = theta;
        for (j, (&mj, row)) in m.iter().zip(theta.iter_mut()).enumerate() {
            if !(mj.is_finite() && mj >= 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "step {} has iteration count {mj}",
                    j + 1
                )));
            }
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    actual: row.len(),
                });
            }
            for (i, t) in row.iter_mut().enumerate() {
                *t = clamp_angle(*t)
                    .ok_or_else(|| Error::InvalidSchedule(format!("angle {t} at step {}, index {i}", j + 1)))?;
            }
            if mj == 0.0 && row.iter().any(|&t| t > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "step {} has zero iterations but nonzero angles",
                    j + 1
                )));
            }
        }
        Ok(Schedule {
            size,
            m,
            theta,
            m_final: final_step_iterations(size),
        })
    }

    /// The one-step schedule: plain Grover search.
    pub fn grover_only(size: usize) -> Result<Schedule> {
        Schedule::new(size, Vec::new(), Vec::new())
    }

    /// `n - 1` inactive steps (`m = 0`, all angles zero) ahead of the final step.
    pub fn inactive(size: usize, steps: usize) -> Result<Schedule> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("a schedule needs at least one step".into()));
        }
        Schedule::new(size, vec![0.0; steps - 1], vec![vec![0.0; size]; steps - 1])
    }

    /// Total step count `n`, including the final Grover step.
    pub fn steps(&self) -> usize {
        self.m.len() + 1
    }

    pub fn optimized_steps(&self) -> usize {
        self.m.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn iterations(&self) -> &[f64] {
        &self.m
    }

    pub fn final_iterations(&self) -> f64 {
        self.m_final
    }

    pub fn angles(&self) -> &[Vec<f64>] {
        &self.theta
    }

    /// Angle row of a 1-based optimized step.
    pub fn step_angles(&self, step: usize) -> Result<&[f64]> {
        self.check_step(step)?;
        Ok(&self.theta[step - 1])
    }

    pub fn step_iterations(&self, step: usize) -> Result<f64> {
        self.check_step(step)?;
        Ok(self.m[step - 1])
    }

    pub(crate) fn set_step(&mut self, step: usize, m: f64, theta: Vec<f64>) {
        debug_assert_eq!(theta.len(), self.size);
        self.m[step - 1] = m;
        self.theta[step - 1] = theta;
    }

    /// Entry `k` of every returned angle row is this schedule's entry `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Schedule> {
        check_order(order, self.size)?;
        Ok(Schedule {
            size: self.size,
            m: self.m.clone(),
            theta: self
                .theta
                .iter()
                .map(|row| order.iter().map(|&k| row[k]).collect())
                .collect(),
            m_final: self.m_final,
        })
    }

    pub(crate) fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.m.len() {
            return Err(Error::StepOutOfRange {
                step,
                max: self.m.len(),
            });
        }
        Ok(())
    }

    fn check_prior(&self, prior: &Prior) -> Result<()> {
        if prior.len() != self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size,
                actual: prior.len(),
            });
        }
        Ok(())
    }
}

fn clamp_angle(t: f64) -> Option<f64> {
    if !(-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&t) {
        None
    } else {
        Some(t.clamp(0.0, FRAC_PI_2))
    }
}

/// Initial-state amplitudes recovered from one step's final angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub values: Vec<f64>,
    /// `sum_i c_i^2`; close to, but not exactly, one.
    pub norm_squared: f64,
}

/// Inverts `theta_i = (2m + 1) asin(c_i)` for a 1-based step.
pub fn coefficients_from_angles(schedule: &Schedule, step: usize) -> Result<Coefficients> {
    let m = schedule.step_iterations(step)?;
    let values: Vec<f64> = schedule.theta[step - 1]
        .iter()
        .map(|&t| (t / (2.0 * m + 1.0)).sin())
        .collect();
    let norm_squared = pairwise_sum_by(values.len(), |i| values[i] * values[i]);
    Ok(Coefficients { values, norm_squared })
}

/// Probability that a step with final angle `theta` measures the solution.
pub fn success_probability(theta: f64) -> f64 {
    let s = theta.sin();
    s * s
}

pub fn failure_probability(theta: f64) -> f64 {
    let c = theta.cos();
    c * c
}

/// Expected cost of a schedule, resolved per hypothetical solution index.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    /// `E = sum_i p_i E_i`.
    pub expected: f64,
    pub per_index: Vec<f64>,
    /// Row `j` (0-based, `n` rows) is the probability that steps `1..=j` all fail.
    pub survival: Vec<Vec<f64>>,
}

impl CostBreakdown {
    /// Prior-weighted probability that the search ends at each step (length `n`).
    pub fn success_mass(&self, prior: &Prior) -> Vec<f64> {
        let p = prior.probabilities();
        let n = self.survival.len();
        (0..n)
            .map(|j| {
                if j + 1 < n {
                    let (before, after) = (&self.survival[j], &self.survival[j + 1]);
                    pairwise_sum_by(p.len(), |i| p[i] * (before[i] - after[i]))
                } else {
                    let last = &self.survival[j];
                    pairwise_sum_by(p.len(), |i| p[i] * last[i])
                }
            })
            .collect()
    }
}

pub fn expected_cost(schedule: &Schedule, prior: &Prior) -> Result<CostBreakdown> {
    schedule.check_prior(prior)?;
    let size = schedule.size;
    let mut survival = Vec::with_capacity(schedule.steps());
    let mut per_index = vec![0.0; size];
    let mut current = vec![1.0; size];
    for (&m, row) in schedule.m.iter().zip(&schedule.theta) {
        let mut next = current.clone();
        for i in 0..size {
            per_index[i] += m * current[i];
            next[i] *= failure_probability(row[i]);
        }
        survival.push(std::mem::replace(&mut current, next));
    }
    for i in 0..size {
        per_index[i] += schedule.m_final * current[i];
    }
    survival.push(current);
    let p = prior.probabilities();
    let expected = pairwise_sum_by(size, |i| p[i] * per_index[i]);
    Ok(CostBreakdown {
        expected,
        per_index,
        survival,
    })
}

/// `E` alone, without materializing the survival matrix.
pub fn expected_cost_value(schedule: &Schedule, prior: &Prior) -> Result<f64> {
    schedule.check_prior(prior)?;
    let p = prior.probabilities();
    Ok(pairwise_sum_by(schedule.size, |i| {
        p[i] * index_cost(&schedule.m, &schedule.theta, schedule.m_final, i)
    }))
}

fn index_cost(m: &[f64], theta: &[Vec<f64>], m_final: f64, i: usize) -> f64 {
    let mut surv = 1.0;
    let mut cost = 0.0;
    for (&mj, row) in m.iter().zip(theta) {
        cost += mj * surv;
        surv *= failure_probability(row[i]);
    }
    cost + m_final * surv
}

/// `sum_i theta_i^2 - 4 m^2` for a 1-based step.
pub fn constraint_residual(schedule: &Schedule, step: usize) -> Result<f64> {
    let m = schedule.step_iterations(step)?;
    let row = &schedule.theta[step - 1];
    Ok(pairwise_sum_by(row.len(), |i| row[i] * row[i]) - 4.0 * m * m)
}

/// A schedule together with the multipliers that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub schedule: Schedule,
    /// One multiplier per optimized step; zero when not known.
    pub lambda: Vec<f64>,
}

/// Plan file:
///
/// ```text
/// n=<int> N=<int> mFinal=<real>
/// step=<j> m=<real> lambda=<real>      (one line per optimized step)
/// theta
/// <theta_0> <theta_1> ... <theta_{N-1}>  (one row per optimized step)
/// ```
pub fn write_plan<W: Write>(mut out: W, plan: &Plan) -> Result<()> {
    let s = &plan.schedule;
    if plan.lambda.len() != s.optimized_steps() {
        return Err(Error::DimensionMismatch {
            expected: s.optimized_steps(),
            actual: plan.lambda.len(),
        });
    }
    writeln!(out, "n={} N={} mFinal={}", s.steps(), s.size, format_real(s.m_final))?;
    for (j, (m, lambda)) in s.m.iter().zip(&plan.lambda).enumerate() {
        writeln!(
            out,
            "step={} m={} lambda={}",
            j + 1,
            format_real(*m),
            format_real(*lambda)
        )?;
    }
    writeln!(out, "theta")?;
    for row in &s.theta {
        let mut first = true;
        for t in row {
            if !first {
                out.write_all(b" ")?;
            }
            out.write_all(format_real(*t).as_bytes())?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_plan<R: BufRead>(input: R) -> Result<Plan> {
    let mut lines = input.lines().enumerate();
    let mut next_line = || -> Result<(usize, String)> {
        match lines.next() {
            Some((k, line)) => Ok((k + 1, line?)),
            None => Err(Error::parse(0, "unexpected end of plan file")),
        }
    };

    let (ln, header) = next_line()?;
    let fields = key_values(&header);
    let steps: usize = field(&fields, "n", ln)?;
    let size: usize = field(&fields, "N", ln)?;
    let m_final: f64 = field(&fields, "mFinal", ln)?;
    if steps == 0 {
        return Err(Error::parse(ln, "n must be at least 1"));
    }
    let expected_final = final_step_iterations(size);
    if (m_final - expected_final).abs() > 1e-12 * expected_final {
        return Err(Error::parse(
            ln,
            format!("mFinal={m_final} does not match (pi/4)sqrt({size})"),
        ));
    }

    let mut m = Vec::with_capacity(steps - 1);
    let mut lambda = Vec::with_capacity(steps - 1);
    for j in 1..steps {
        let (ln, line) = next_line()?;
        let fields = key_values(&line);
        let step: usize = field(&fields, "step", ln)?;
        if step != j {
            return Err(Error::parse(ln, format!("expected step={j}, found step={step}")));
        }
        m.push(field(&fields, "m", ln)?);
        lambda.push(field(&fields, "lambda", ln)?);
    }

    let (ln, marker) = next_line()?;
    if marker.trim() != "theta" {
        return Err(Error::parse(ln, "expected `theta`"));
    }
    let mut theta = Vec::with_capacity(steps - 1);
    for _ in 1..steps {
        let (ln, line) = next_line()?;
        let row = line
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(ln, format!("bad angle `{tok}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        theta.push(row);
    }
    Ok(Plan {
        schedule: Schedule::new(size, m, theta)?,
        lambda,
    })
}

fn key_values(line: &str) -> Vec<(&str, &str)> {
    line.split_ascii_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect()
}

fn field<T: std::str::FromStr>(fields: &[(&str, &str)], key: &str, line: usize) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(line, format!("missing `{key}=`")))?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("bad value `{raw}` for `{key}`")))
}
