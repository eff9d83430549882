//! Monte-Carlo replay of the multi-step search: draw a solution from the
//! prior, run steps until one succeeds, and tally the iterations spent.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::schedule::{expected_cost_value, success_probability, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    /// Fractional iteration counts, matching the analytic cost.
    Relaxed,
    /// Whole iterations: `round(m)` per step, `ceil` for the final step, with
    /// success angles recomputed from the rounded count.
    Integer,
}

impl fmt::Display for SimulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimulationMode::Relaxed => "relaxed",
            SimulationMode::Integer => "integer",
        })
    }
}

impl FromStr for SimulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relaxed" => Ok(SimulationMode::Relaxed),
            "integer" => Ok(SimulationMode::Integer),
            other => Err(Error::InvalidConfig(format!("unknown simulation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub trials: u64,
    pub mean_iterations: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub stderr: f64,
    pub analytic_e: f64,
    pub mode: SimulationMode,
    pub seed: u64,
}

impl SimulationReport {
    /// `|mean - E| / stderr`; zero when both the spread and the gap vanish.
    pub fn z_score(&self) -> f64 {
        let gap = (self.mean_iterations - self.analytic_e).abs();
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trials={} meanIterations={} stderr={} analyticE={} mode={} seed={}",
            self.trials, self.mean_iterations, self.stderr, self.analytic_e, self.mode, self.seed
        )
    }
}

struct Simulator<'a> {
    schedule: &'a Schedule,
    cumulative: Vec<f64>,
    mode: SimulationMode,
    base: ChaCha8Rng,
}

impl<'a> Simulator<'a> {
    fn new(schedule: &'a Schedule, prior: &Prior, seed: u64, mode: SimulationMode) -> Result<Self> {
        if prior.len() != schedule.size() {
            return Err(Error::DimensionMismatch {
                expected: schedule.size(),
                actual: prior.len(),
            });
        }
        let cumulative = prior
            .probabilities()
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Simulator {
            schedule,
            cumulative,
            mode,
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Runs one trial on its own stream; returns the cost and the 1-based step that succeeded.
    fn trial(&self, index: u64) -> (f64, usize) {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        let total = *self.cumulative.last().expect("prior has at least two entries");
        let u = rng.random::<f64>() * total;
        let solution = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);

        let mut cost = 0.0;
        for (j, (&m, row)) in self
            .schedule
            .iterations()
            .iter()
            .zip(self.schedule.angles())
            .enumerate()
        {
            let theta = row[solution];
            let (spent, angle) = match self.mode {
                SimulationMode::Relaxed => (m, theta),
                SimulationMode::Integer => {
                    let whole = m.round();
                    let amplitude = (theta / (2.0 * m + 1.0)).sin();
                    (whole, (2.0 * whole + 1.0) * amplitude.asin())
                }
            };
            cost += spent;
            if rng.random::<f64>() < success_probability(angle) {
                return (cost, j + 1);
            }
        }
        let last = match self.mode {
            SimulationMode::Relaxed => self.schedule.final_iterations(),
            SimulationMode::Integer => self.schedule.final_iterations().ceil(),
        };
        (cost + last, self.schedule.steps())
    }
}

/// Runs `trials` independent searches. Trial `k` draws from stream `k` of a
/// ChaCha8 generator keyed by `seed`, so results replay bit-for-bit.
pub fn simulate(
    schedule: &Schedule,
    prior: &Prior,
    trials: u64,
    seed: u64,
    mode: SimulationMode,
) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let sim = Simulator::new(schedule, prior, seed, mode)?;
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..trials {
        let (cost, _) = sim.trial(k);
        let delta = cost - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (cost - mean);
    }
    let variance = if trials > 1 { m2 / (trials - 1) as f64 } else { 0.0 };
    Ok(SimulationReport {
        trials,
        mean_iterations: mean,
        stderr: (variance.max(0.0) / trials as f64).sqrt(),
        analytic_e: expected_cost_value(schedule, prior)?,
        mode,
        seed,
    })
}

/// Number of relaxed-mode trials that end at each step (length `n`).
pub fn success_step_histogram(schedule: &Schedule, prior: &Prior, trials: u64, seed: u64) -> Result<Vec<u64>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let sim = Simulator::new(schedule, prior, seed, SimulationMode::Relaxed)?;
    let mut counts = vec![0u64; schedule.steps()];
    for k in 0..trials {
        let (_, step) = sim.trial(k);
        counts[step - 1] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn uniform(size: usize) -> Prior {
        Prior::new(vec![1.0; size], "uniform").unwrap()
    }

    #[test]
    fn grover_only_is_deterministic_cost() {
        let s = Schedule::grover_only(100).unwrap();
        let r = simulate(&s, &uniform(100), 1000, 1, SimulationMode::Relaxed).unwrap();
        assert_eq!(r.mean_iterations, s.final_iterations());
        assert_eq!(r.stderr, 0.0);
        let r = simulate(&s, &uniform(100), 10, 1, SimulationMode::Integer).unwrap();
        assert_eq!(r.mean_iterations, s.final_iterations().ceil());
        let h = success_step_histogram(&s, &uniform(100), 500, 3).unwrap();
        assert_eq!(h, vec![500]);
    }

    #[test]
    fn certain_first_step() {
        let s = Schedule::new(16, vec![3.0, 1.0], vec![vec![FRAC_PI_2; 16], vec![0.5; 16]]).unwrap();
        let r = simulate(&s, &uniform(16), 1000, 9, SimulationMode::Relaxed).unwrap();
        assert_eq!(r.mean_iterations, 3.0);
        assert_eq!(r.stderr, 0.0);
        let h = success_step_histogram(&s, &uniform(16), 1000, 9).unwrap();
        assert_eq!(h, vec![1000, 0, 0]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let s = Schedule::new(8, vec![1.0], vec![vec![0.7; 8]]).unwrap();
        let prior = Prior::new((1..=8).map(f64::from).collect(), "ramp").unwrap();
        let a = simulate(&s, &prior, 5000, 42, SimulationMode::Integer).unwrap();
        let b = simulate(&s, &prior, 5000, 42, SimulationMode::Integer).unwrap();
        assert_eq!(a, b);
        let c = simulate(&s, &prior, 5000, 43, SimulationMode::Integer).unwrap();
        assert_ne!(a.mean_iterations, c.mean_iterations);
    }

    #[test]
    fn zero_probability_indices_are_never_drawn() {
        // index 1 has zero mass; its angle 0 would force every trial to the final step
        let prior = Prior::new(vec![1.0, 0.0, 1.0], "gap").unwrap();
        let s = Schedule::new(3, vec![1.0], vec![vec![FRAC_PI_2, 0.0, FRAC_PI_2]]).unwrap();
        let h = success_step_histogram(&s, &prior, 2000, 5).unwrap();
        assert_eq!(h, vec![2000, 0]);
    }

    #[test]
    fn rejects_bad_input() {
        let s = Schedule::grover_only(4).unwrap();
        assert!(simulate(&s, &uniform(5), 10, 0, SimulationMode::Relaxed).is_err());
        assert!(simulate(&s, &uniform(4), 0, 0, SimulationMode::Relaxed).is_err());
        assert!("fractional".parse::<SimulationMode>().is_err());
        assert_eq!("integer".parse::<SimulationMode>().unwrap(), SimulationMode::Integer);
    }
}
