//! Optimized-cost tables across prior families and the `E ~ k sqrt(sigma)` fit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizerConfig, OptimizerState};
use crate::prior::{discretize, DistributionSpec, Family, Prior};
use crate::schedule::final_step_iterations;

/// Percentage saved relative to plain Grover search, `100 (1 - E / ((pi/4) sqrt(N)))`.
pub fn improvement(expected_cost: f64, size: usize) -> f64 {
    100.0 * (1.0 - expected_cost / final_step_iterations(size))
}

/// The eight benchmark families: uniform, `(k+1) x^k` for `k = 1..=5`,
/// exponential with `c = 30` and half-normal with `c = 18`.
pub fn reference_families() -> Vec<Family> {
    let mut families = vec![Family::Uniform];
    families.extend((1..=5).map(Family::Power));
    families.push(Family::Exponential(30.0));
    families.push(Family::HalfNormal(18.0));
    families
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub size: usize,
    pub steps: usize,
    /// Index standard deviation of the prior sorted in descending order.
    pub sigma: f64,
    pub expected_cost: f64,
    pub e_over_sqrt_n: f64,
    pub e_over_sqrt_sigma: f64,
    pub improvement_percent: f64,
    pub converged: bool,
    pub outer_iterations: usize,
}

impl TableRow {
    pub fn from_state(prior: &Prior, state: &OptimizerState) -> TableRow {
        let size = prior.len();
        let sigma = prior.sorted_index_stddev();
        let e = state.expected_cost;
        TableRow {
            label: prior.label().to_string(),
            size,
            steps: state.schedule.steps(),
            sigma,
            expected_cost: e,
            e_over_sqrt_n: e / (size as f64).sqrt(),
            e_over_sqrt_sigma: e / sigma.sqrt(),
            improvement_percent: improvement(e, size),
            converged: state.converged,
            outer_iterations: state.outer_iterations,
        }
    }
}

/// A table row together with the optimizer state that produced it.
#[derive(Debug, Clone)]
pub struct RowRun {
    pub prior: Prior,
    pub state: OptimizerState,
    pub row: TableRow,
}

pub fn run_row(spec: &DistributionSpec, config: &OptimizerConfig) -> Result<RowRun> {
    let prior = discretize(spec)?;
    let state = optimize(&prior, config)?;
    let row = TableRow::from_state(&prior, &state);
    Ok(RowRun { prior, state, row })
}

/// Optimizes every spec in order. Non-converged rows are kept and flagged.
pub fn build_table(specs: &[DistributionSpec], config: &OptimizerConfig) -> Result<Vec<TableRow>> {
    if specs.is_empty() {
        return Err(Error::InsufficientData("no distributions to tabulate".into()));
    }
    specs
        .iter()
        .map(|spec| run_row(spec, config).map(|run| run.row))
        .collect()
}

const TABLE_HEADER: &str =
    "label\tN\tsteps\tsigma\tE\tE_over_sqrtN\tE_over_sqrt_sigma\timprovement_percent\tconverged\touter_iterations";

pub fn write_table<W: Write>(mut out: W, rows: &[TableRow]) -> Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.label,
            r.size,
            r.steps,
            r.sigma,
            r.expected_cost,
            r.e_over_sqrt_n,
            r.e_over_sqrt_sigma,
            r.improvement_percent,
            r.converged,
            r.outer_iterations
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_table<R: BufRead>(input: R) -> Result<Vec<TableRow>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "empty table"))??;
    if header.trim_end() != TABLE_HEADER {
        return Err(Error::parse(1, "unexpected table header"));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ln = k + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(ln, format!("expected 10 columns, found {}", cols.len())));
        }
        fn num<T: std::str::FromStr>(raw: &str, ln: usize) -> Result<T> {
            raw.parse().map_err(|_| Error::parse(ln, format!("bad value `{raw}`")))
        }
        rows.push(TableRow {
            label: cols[0].to_string(),
            size: num(cols[1], ln)?,
            steps: num(cols[2], ln)?,
            sigma: num(cols[3], ln)?,
            expected_cost: num(cols[4], ln)?,
            e_over_sqrt_n: num(cols[5], ln)?,
            e_over_sqrt_sigma: num(cols[6], ln)?,
            improvement_percent: num(cols[7], ln)?,
            converged: num(cols[8], ln)?,
            outer_iterations: num(cols[9], ln)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Slope of `E` on `sqrt(sigma)` through the origin.
    pub coefficient: f64,
    /// `(label, E - coefficient sqrt(sigma))` per row.
    pub residuals: Vec<(String, f64)>,
    pub point_count: usize,
}

/// Least squares through the origin: `k = sum(E sqrt(sigma)) / sum(sigma)`.
pub fn fit_linear(rows: &[TableRow]) -> Result<FitResult> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let num: f64 = rows.iter().map(|r| r.expected_cost * r.sigma.sqrt()).sum();
    let den: f64 = rows.iter().map(|r| r.sigma).sum();
    if !(den > 0.0) {
        return Err(Error::InsufficientData("every row has zero spread".into()));
    }
    let coefficient = num / den;
    let residuals = rows
        .iter()
        .map(|r| (r.label.clone(), r.expected_cost - coefficient * r.sigma.sqrt()))
        .collect();
    Ok(FitResult {
        coefficient,
        residuals,
        point_count: rows.len(),
    })
}

/// Fit summary followed by plot data, one point per row:
/// `label  sqrt_sigma  E  E_over_sqrt_sigma  residual`.
pub fn write_fit<W: Write>(mut out: W, fit: &FitResult, rows: &[TableRow]) -> Result<()> {
    writeln!(out, "coefficient\t{}", fit.coefficient)?;
    writeln!(out, "points\t{}", fit.point_count)?;
    writeln!(out, "domain\ttested families")?;
    writeln!(out, "label\tsqrt_sigma\tE\tE_over_sqrt_sigma\tresidual")?;
    for (r, (_, residual)) in rows.iter().zip(&fit.residuals) {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.label,
            r.sigma.sqrt(),
            r.expected_cost,
            r.e_over_sqrt_sigma,
            residual
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, sigma: f64, e: f64) -> TableRow {
        TableRow {
            label: label.into(),
            size: 100,
            steps: 10,
            sigma,
            expected_cost: e,
            e_over_sqrt_n: e / 10.0,
            e_over_sqrt_sigma: e / sigma.sqrt(),
            improvement_percent: improvement(e, 100),
            converged: true,
            outer_iterations: 1,
        }
    }

    #[test]
    fn improvement_values() {
        let n = 1_000_000;
        assert!(improvement(final_step_iterations(n), n).abs() < 1e-12);
        let r = improvement(0.690 * 1000.0, n);
        assert!((r - 12.146_471_413_273_762).abs() < 1e-9);
        let r = improvement(0.213 * 1000.0, n);
        assert!((r - 72.879_997_697_141_04).abs() < 1e-9);
    }

    #[test]
    fn exact_linear_data() {
        let rows = vec![row("a", 4.0, 4.0), row("b", 25.0, 10.0)];
        let fit = fit_linear(&rows).unwrap();
        assert!((fit.coefficient - 2.0).abs() < 1e-15);
        assert!(fit.residuals.iter().all(|(_, r)| r.abs() < 1e-14));
        assert_eq!(fit.point_count, 2);
    }

    #[test]
    fn single_row_is_underdetermined() {
        assert!(fit_linear(&[row("a", 4.0, 4.0)]).is_err());
        assert!(build_table(&[], &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![row("uniform", 28.86, 69.0), row("exp:30 permuted:4", 3.3, 21.3)];
        let mut buf = Vec::new();
        write_table(&mut buf, &rows).unwrap();
        assert_eq!(read_table(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sigma_column_uses_sorted_prior() {
        let spec = DistributionSpec::new(Family::Power(2), 500);
        let config = OptimizerConfig::default();
        let ordered = run_row(&spec, &config).unwrap().row;
        let shuffled = run_row(&spec.clone().with_permutation(11), &config).unwrap().row;
        assert_eq!(ordered.sigma, shuffled.sigma);
        assert!((ordered.expected_cost - shuffled.expected_cost).abs() < 2e-6);
    }
}
