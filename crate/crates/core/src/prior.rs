//! Discrete priors over the search set: construction from continuous
//! families on `[0, 1]`, seeded permutation, and index moments.

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{format_real, pairwise_sum, pairwise_sum_by};

/// Continuous density on `[0, 1]` (or an explicit weight vector) a prior is built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `f(x) = 1`.
    Uniform,
    /// `f(x) = (n + 1) x^n`.
    Power(u32),
    /// `f(x) = A e^{-c x}`, truncated at `x = 1`.
    Exponential(f64),
    /// `f(x) = A e^{-c x^2}`, truncated at `x = 1`.
    HalfNormal(f64),
    /// Arbitrary non-negative weights, normalized on construction.
    Custom(Vec<f64>),
}

impl Family {
    /// Parses the command-line grammar
    /// `uniform | power:<n> | exp:<c> | hnorm:<c> | custom:<path>`.
    ///
    /// `custom:<path>` reads the weights from disk, either as a prior file
    /// (see [`write_prior`]) or as whitespace-separated numbers.
    pub fn parse(text: &str) -> Result<Family> {
        let text = text.trim();
        let (name, arg) = match text.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (text, None),
        };
        let need = || arg.ok_or_else(|| Error::InvalidDistribution(format!("`{name}` needs a parameter")));
        let real = |arg: &str| {
            arg.parse::<f64>()
                .map_err(|_| Error::InvalidDistribution(format!("bad parameter `{arg}` for `{name}`")))
        };
        let family = match name {
            "uniform" => Family::Uniform,
            "power" => {
                let arg = need()?;
                Family::Power(arg.parse().map_err(|_| {
                    Error::InvalidDistribution(format!("power exponent must be a non-negative integer, got `{arg}`"))
                })?)
            }
            "exp" => Family::Exponential(real(need()?)?),
            "hnorm" => Family::HalfNormal(real(need()?)?),
            "custom" => Family::Custom(read_weights(Path::new(need()?))?),
            other => return Err(Error::InvalidDistribution(format!("unknown family `{other}`"))),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Family::Exponential(c) | Family::HalfNormal(c) if !(c.is_finite() && c > 0.0) => Err(
                Error::InvalidDistribution(format!("rate parameter must be finite and positive, got {c}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Uniform => write!(f, "uniform"),
            Family::Power(n) => write!(f, "power:{n}"),
            Family::Exponential(c) => write!(f, "exp:{c}"),
            Family::HalfNormal(c) => write!(f, "hnorm:{c}"),
            Family::Custom(_) => write!(f, "custom"),
        }
    }
}

/// A family, a search-set size and an optional permutation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    pub size: usize,
    pub permutation_seed: Option<u64>,
}

impl DistributionSpec {
    pub fn new(family: Family, size: usize) -> Self {
        DistributionSpec {
            family,
            size,
            permutation_seed: None,
        }
    }

    pub fn with_permutation(mut self, seed: u64) -> Self {
        self.permutation_seed = Some(seed);
        self
    }
}

/// Probability of each index being the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    p: Vec<f64>,
    label: String,
}

impl Prior {
    /// Builds a prior from non-negative weights, renormalizing by their sum.
    pub fn new(weights: Vec<f64>, label: impl Into<String>) -> Result<Prior> {
        if weights.len() < 2 {
            return Err(Error::InvalidPrior(format!(
                "search set needs at least 2 elements, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidPrior(format!("weight {i} is {w}")));
        }
        let total = pairwise_sum(&weights);
        if !(total > 0.0) {
            return Err(Error::InvalidPrior("weights sum to zero".into()));
        }
        let p = weights.into_iter().map(|w| w / total).collect();
        let label = label.into().replace('\n', " ");
        Ok(Prior { p, label })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn max_probability(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    /// Standard deviation of the solution index under this prior.
    pub fn index_stddev(&self) -> f64 {
        index_stddev(self)
    }

    /// Index standard deviation of the same probabilities sorted in
    /// descending order; invariant under any permutation of the prior.
    pub fn sorted_index_stddev(&self) -> f64 {
        self.sorted_descending().index_stddev()
    }

    pub fn sorted_descending(&self) -> Prior {
        let mut p = self.p.clone();
        p.sort_by(|a, b| b.total_cmp(a));
        Prior {
            p,
            label: self.label.clone(),
        }
    }

    /// Reorders so that the returned prior's entry `k` is this prior's entry `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Prior> {
        check_order(order, self.len())?;
        Ok(Prior {
            p: order.iter().map(|&k| self.p[k]).collect(),
            label: self.label.clone(),
        })
    }

    pub fn permute(&self, seed: u64) -> Prior {
        permute(self, seed)
    }
}

pub(crate) fn check_order(order: &[usize], len: usize) -> Result<()> {
    if order.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            actual: order.len(),
        });
    }
    let mut seen = vec![false; len];
    for &k in order {
        if k >= len || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidPrior("ordering is not a permutation".into()));
        }
    }
    Ok(())
}

/// Bins the family's density into `size` equal-width cells of `[0, 1]`.
pub fn discretize(spec: &DistributionSpec) -> Result<Prior> {
    let n = spec.size;
    if n < 2 {
        return Err(Error::InvalidDistribution(format!(
            "search set needs at least 2 elements, got {n}"
        )));
    }
    spec.family.validate()?;
    let nf = n as f64;
    let weights: Vec<f64> = match &spec.family {
        Family::Uniform => vec![1.0 / nf; n],
        Family::Power(k) => {
            // x_{i+1}^K - x_i^K = (b - a) * sum_r b^r a^{K-1-r}, all terms positive.
            let degree = *k as usize + 1;
            (0..n)
                .map(|i| {
                    let a = i as f64 / nf;
                    let b = (i + 1) as f64 / nf;
                    let mut acc = 1.0;
                    let mut b_pow = 1.0;
                    for _ in 1..degree {
                        b_pow *= b;
                        acc = acc * a + b_pow;
                    }
                    acc / nf
                })
                .collect()
        }
        Family::Exponential(c) => {
            let bin = -(-c / nf).exp_m1();
            let norm = -(-c).exp_m1();
            (0..n).map(|i| (-c * i as f64 / nf).exp() * bin / norm).collect()
        }
        Family::HalfNormal(c) => {
            let scale = c.sqrt();
            let norm = libm::erf(scale);
            (0..n)
                .map(|i| {
                    let a = scale * i as f64 / nf;
                    let b = scale * (i + 1) as f64 / nf;
                    // erfc differences keep relative precision out in the tail
                    let mass = if a > 0.5 {
                        libm::erfc(a) - libm::erfc(b)
                    } else {
                        libm::erf(b) - libm::erf(a)
                    };
                    mass / norm
                })
                .collect()
        }
        Family::Custom(values) => {
            if values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: values.len(),
                });
            }
            values.clone()
        }
    };
    let prior = Prior::new(weights, spec.family.to_string())?;
    Ok(match spec.permutation_seed {
        Some(seed) => permute(&prior, seed),
        None => prior,
    })
}

/// Seeded Fisher-Yates shuffle of `0..len`.
pub fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

pub fn permute(prior: &Prior, seed: u64) -> Prior {
    let order = permutation(prior.len(), seed);
    Prior {
        p: order.iter().map(|&k| prior.p[k]).collect(),
        label: format!("{} permuted:{seed}", prior.label),
    }
}

/// `sqrt(sum_i p_i i^2 - (sum_i p_i i)^2)`, evaluated in centered form.
pub fn index_stddev(prior: &Prior) -> f64 {
    let p = &prior.p;
    let mean = pairwise_sum_by(p.len(), |i| p[i] * i as f64);
    let var = pairwise_sum_by(p.len(), |i| {
        let d = i as f64 - mean;
        p[i] * d * d
    });
    var.max(0.0).sqrt()
}

/// Writes the header `N=<int> label=<string>` and one probability per line.
pub fn write_prior<W: Write>(mut out: W, prior: &Prior) -> Result<()> {
    writeln!(out, "N={} label={}", prior.len(), prior.label)?;
    for p in &prior.p {
        writeln!(out, "{}", format_real(*p))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_prior<R: BufRead>(input: R) -> Result<Prior> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "empty prior file"))??;
    let (size, label) = parse_prior_header(&header)?;
    let mut values = Vec::with_capacity(size);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .map_err(|_| Error::parse(k + 2, format!("bad probability `{line}`")))?,
        );
    }
    if values.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            actual: values.len(),
        });
    }
    Prior::new(values, label)
}

fn parse_prior_header(header: &str) -> Result<(usize, String)> {
    let rest = header
        .strip_prefix("N=")
        .ok_or_else(|| Error::parse(1, "expected `N=<int> label=<string>`"))?;
    let (size, label) = match rest.split_once(' ') {
        Some((size, label)) => (size, label.strip_prefix("label=").unwrap_or(label)),
        None => (rest, ""),
    };
    let size = size
        .parse::<usize>()
        .map_err(|_| Error::parse(1, format!("bad size `{size}`")))?;
    Ok((size, label.to_string()))
}

/// Reads raw weights: a prior file, or whitespace-separated numbers.
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with("N=") {
        return Ok(read_prior(text.as_bytes())?.p);
    }
    text.split_whitespace()
        .enumerate()
        .map(|(k, tok)| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(k + 1, format!("bad weight `{tok}`")))
        })
        .collect()
}
