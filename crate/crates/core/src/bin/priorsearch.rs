use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use priorsearch::numeric::format_real;
use priorsearch::optimizer::{LambdaInit, OptimizerConfig, Warning};
use priorsearch::prior::{discretize, write_prior, DistributionSpec, Family, Prior};
use priorsearch::report::{self, fit_linear, improvement, reference_families, run_row, TableRow};
use priorsearch::schedule::{expected_cost, read_plan, write_plan, Plan};
use priorsearch::statevector::check_statevector;
use priorsearch::{montecarlo, Result, SimulationMode};

#[derive(Parser)]
#[command(
    name = "priorsearch",
    version,
    about = "Multi-step Grover search schedules for priors over the search set"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DistArgs {
    /// uniform | power:<n> | exp:<c> | hnorm:<c> | custom:<path>
    #[arg(long)]
    dist: String,
    /// Search-set size N
    #[arg(long)]
    size: usize,
    /// Apply a seeded random permutation to the prior
    #[arg(long)]
    permute_seed: Option<u64>,
}

impl DistArgs {
    fn prior(&self) -> Result<Prior> {
        let mut spec = DistributionSpec::new(Family::parse(&self.dist)?, self.size);
        spec.permutation_seed = self.permute_seed;
        discretize(&spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a discretized prior to a file
    Discretize {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a schedule for a prior and write the plan file
    Optimize {
        #[command(flatten)]
        dist: DistArgs,
        /// Total steps including the final Grover step
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Halting threshold on the change of E between sweeps
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda_init: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_outer: usize,
    },
    /// Evaluate the expected cost of a plan under a prior
    Evaluate {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Monte-Carlo simulation of a plan
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// relaxed | integer
        #[arg(long, default_value = "relaxed")]
        mode: SimulationMode,
    },
    /// Compare explicit state-vector evolution against the closed form
    CheckStatevector {
        #[arg(long)]
        size: usize,
        /// Initial amplitude on the solution (default 1/sqrt(N))
        #[arg(long)]
        bias: Option<f64>,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long, default_value_t = 0)]
        solution: usize,
    },
    /// Optimize the eight reference families and write a TSV table
    Table1 {
        #[arg(long, default_value_t = 1_000_000)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also optimize a randomly permuted copy of every family
        #[arg(long)]
        with_permuted: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fit E = k sqrt(sigma) through the origin over a table
    Fit {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn load_plan(path: &Path, prior: &Prior) -> Result<Plan> {
    let plan = read_plan(open(path)?)?;
    if plan.schedule.size() != prior.len() {
        return Err(priorsearch::Error::DimensionMismatch {
            expected: plan.schedule.size(),
            actual: prior.len(),
        });
    }
    Ok(plan)
}

fn cost_summary(out: &mut impl Write, e: f64, prior: &Prior) -> io::Result<()> {
    let n = prior.len();
    writeln!(out, "E={}", format_real(e))?;
    writeln!(out, "E_over_sqrtN={}", format_real(e / (n as f64).sqrt()))?;
    writeln!(
        out,
        "E_over_sqrt_sigma={}",
        format_real(e / prior.sorted_index_stddev().sqrt())
    )?;
    writeln!(out, "improvement_percent={}", format_real(improvement(e, n)))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Discretize { dist, out: path } => {
            let prior = dist.prior()?;
            write_prior(create(&path)?, &prior)?;
            writeln!(out, "N={} sigma={}", prior.len(), format_real(prior.index_stddev()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize {
            dist,
            steps,
            tol,
            out: path,
            lambda_init,
            max_outer,
        } => {
            let prior = dist.prior()?;
            let config = OptimizerConfig {
                steps,
                tol_e: tol,
                max_outer_iterations: max_outer,
                lambda_init: lambda_init.map_or(LambdaInit::Scaled, LambdaInit::Value),
                ..OptimizerConfig::default()
            };
            let state = priorsearch::optimize(&prior, &config)?;
            write_plan(
                create(&path)?,
                &Plan {
                    schedule: state.schedule.clone(),
                    lambda: state.lambda.clone(),
                },
            )?;
            writeln!(out, "label={}", prior.label())?;
            writeln!(out, "converged={}", state.converged)?;
            writeln!(out, "outer_iterations={}", state.outer_iterations)?;
            writeln!(out, "delta_E={}", format_real(state.delta_e))?;
            cost_summary(&mut out, state.expected_cost, &prior)?;
            for (j, ((m, lambda), r)) in state
                .schedule
                .iterations()
                .iter()
                .zip(&state.lambda)
                .zip(&state.residuals)
                .enumerate()
            {
                writeln!(
                    out,
                    "step={} m={} lambda={} residual_multiplier={} residual_constraint={} residual_stationarity={} residual_complementarity={}",
                    j + 1,
                    format_real(*m),
                    format_real(*lambda),
                    format_real(r.multiplier),
                    format_real(r.constraint),
                    format_real(r.stationarity),
                    format_real(r.complementarity)
                )?;
            }
            for w in &state.warnings {
                match w {
                    Warning::ConcentratedPrior => writeln!(
                        out,
                        "warning=prior mass above 0.1 on one index; small-angle constraint unreliable"
                    )?,
                    Warning::NotConverged => writeln!(out, "warning=not converged")?,
                }
            }
            Ok(if state.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Evaluate { plan, dist } => {
            let prior = dist.prior()?;
            let plan = load_plan(&plan, &prior)?;
            let cost = expected_cost(&plan.schedule, &prior)?;
            writeln!(out, "n={} N={}", plan.schedule.steps(), prior.len())?;
            cost_summary(&mut out, cost.expected, &prior)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            plan,
            dist,
            trials,
            seed,
            mode,
        } => {
            let prior = dist.prior()?;
            let plan = load_plan(&plan, &prior)?;
            let report = montecarlo::simulate(&plan.schedule, &prior, trials, seed, mode)?;
            writeln!(out, "{report}")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckStatevector {
            size,
            bias,
            iters,
            solution,
        } => {
            let check = check_statevector(size, solution, bias, iters)?;
            writeln!(
                out,
                "N={} solution={} bias={} iters={} evolved={} closed_form={} abs_diff={} result={}",
                check.size,
                check.solution,
                format_real(check.bias),
                check.iterations,
                format_real(check.evolved),
                format_real(check.closed_form),
                format_real(check.difference()),
                if check.passed() { "pass" } else { "fail" }
            )?;
            Ok(if check.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Table1 {
            size,
            steps,
            tol,
            out: path,
            with_permuted,
            seed,
        } => {
            let config = OptimizerConfig {
                steps,
                tol_e: tol,
                ..OptimizerConfig::default()
            };
            let mut specs: Vec<DistributionSpec> = reference_families()
                .into_iter()
                .map(|f| DistributionSpec::new(f, size))
                .collect();
            if with_permuted {
                let permuted: Vec<_> = specs.iter().map(|s| s.clone().with_permutation(seed)).collect();
                specs.extend(permuted);
            }
            let mut rows: Vec<TableRow> = Vec::with_capacity(specs.len());
            for spec in &specs {
                let row = run_row(spec, &config)?.row;
                writeln!(
                    out,
                    "{}\tE/sqrtN={:.4}\tE/sqrt(sigma)={:.4}\timprovement={:.1}%\tconverged={}",
                    row.label, row.e_over_sqrt_n, row.e_over_sqrt_sigma, row.improvement_percent, row.converged
                )?;
                rows.push(row);
            }
            report::write_table(create(&path)?, &rows)?;
            Ok(if rows.iter().all(|r| r.converged) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Fit { table, out: path } => {
            let rows = report::read_table(open(&table)?)?;
            let fit = fit_linear(&rows)?;
            report::write_fit(create(&path)?, &fit, &rows)?;
            writeln!(
                out,
                "coefficient={} points={}",
                format_real(fit.coefficient),
                fit.point_count
            )?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
