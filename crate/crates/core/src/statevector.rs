//! Explicit real amplitude vectors for checking the rotation picture of a
//! Grover step with a biased initial state at small `N`.

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Pass threshold for evolved-vs-closed-form agreement.
pub const CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    a: Vec<f64>,
}

impl AmplitudeVector {
    /// Wraps amplitudes whose squares already sum to one.
    pub fn new(amplitudes: Vec<f64>) -> Result<AmplitudeVector> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidPrior("empty amplitude vector".into()));
        }
        let norm: f64 = amplitudes.iter().map(|x| x * x).sum();
        if !((norm - 1.0).abs() <= NORM_TOL) {
            return Err(Error::InvalidPrior(format!("amplitudes have squared norm {norm}")));
        }
        Ok(AmplitudeVector { a: amplitudes })
    }

    /// Scales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<f64>) -> Result<AmplitudeVector> {
        let norm = amplitudes.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidPrior("cannot normalize a zero vector".into()));
        }
        Ok(AmplitudeVector {
            a: amplitudes.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub fn uniform(size: usize) -> Result<AmplitudeVector> {
        AmplitudeVector::normalized(vec![1.0; size])
    }

    /// Amplitude `bias` on `solution`, the remainder spread evenly over the other indices.
    pub fn biased(size: usize, solution: usize, bias: f64) -> Result<AmplitudeVector> {
        if solution >= size {
            return Err(Error::IndexOutOfRange { index: solution, size });
        }
        if !(bias > 0.0 && bias < 1.0) || size < 2 {
            return Err(Error::InvalidPrior(format!(
                "bias must lie in (0, 1) with at least two indices, got {bias}"
            )));
        }
        let rest = ((1.0 - bias * bias) / (size - 1) as f64).sqrt();
        let mut a = vec![rest; size];
        a[solution] = bias;
        Ok(AmplitudeVector { a })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.a
    }

    pub fn norm_squared(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &AmplitudeVector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.a.iter().zip(&other.a).map(|(x, y)| x * y).sum())
    }

    fn check_len(&self, other: &AmplitudeVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, s: usize) -> Result<()> {
        if s >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: s,
                size: self.len(),
            });
        }
        Ok(())
    }

    /// `O = 1 - 2|s><s|`.
    pub fn oracle_in_place(&mut self, s: usize) -> Result<()> {
        self.check_index(s)?;
        self.a[s] = -self.a[s];
        Ok(())
    }

    /// `R = 1 - 2|psi><psi|` as one inner product and one rank-one update.
    pub fn reflect_in_place(&mut self, psi: &AmplitudeVector) -> Result<()> {
        let overlap = 2.0 * self.dot(psi)?;
        for (x, p) in self.a.iter_mut().zip(&psi.a) {
            *x -= overlap * p;
        }
        Ok(())
    }
}

pub fn apply_oracle(v: &AmplitudeVector, s: usize) -> Result<AmplitudeVector> {
    let mut out = v.clone();
    out.oracle_in_place(s)?;
    Ok(out)
}

pub fn apply_reflection(v: &AmplitudeVector, psi: &AmplitudeVector) -> Result<AmplitudeVector> {
    let mut out = v.clone();
    out.reflect_in_place(psi)?;
    Ok(out)
}

/// `(R O)^m |psi>` for solution `s`.
pub fn grover_evolve(psi: &AmplitudeVector, s: usize, m: u64) -> Result<AmplitudeVector> {
    psi.check_index(s)?;
    let mut v = psi.clone();
    for _ in 0..m {
        v.oracle_in_place(s)?;
        v.reflect_in_place(psi)?;
    }
    Ok(v)
}

/// Squared amplitude at `s` after `m` Grover iterations from `psi`.
pub fn grover_success_probability(psi: &AmplitudeVector, s: usize, m: u64) -> Result<f64> {
    let v = grover_evolve(psi, s, m)?;
    Ok(v.a[s] * v.a[s])
}

/// `sin^2((2m + 1) asin(c_s))`.
pub fn closed_form_success_probability(amplitude: f64, m: u64) -> f64 {
    let angle = (2 * m + 1) as f64 * amplitude.asin();
    let s = angle.sin();
    s * s
}

/// Component of `v` along the normalized projection of `psi` orthogonal to `|s>`.
pub fn non_solution_component(v: &AmplitudeVector, psi: &AmplitudeVector, s: usize) -> Result<f64> {
    v.check_len(psi)?;
    psi.check_index(s)?;
    let cs = psi.a[s];
    let scale = (1.0 - cs * cs).sqrt();
    let overlap: f64 =
        v.a.iter()
            .zip(&psi.a)
            .enumerate()
            .filter(|(i, _)| *i != s)
            .map(|(_, (x, p))| x * p)
            .sum();
    Ok(overlap / scale)
}

/// Default iteration count for a given solution amplitude: the `m` that
/// brings `(2m + 1) asin(c)` closest to `pi/2`.
pub fn optimal_iterations(amplitude: f64) -> u64 {
    let m = std::f64::consts::FRAC_PI_4 / amplitude.asin() - 0.5;
    m.round().max(0.0) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatevectorCheck {
    pub size: usize,
    pub solution: usize,
    pub bias: f64,
    pub iterations: u64,
    pub evolved: f64,
    pub closed_form: f64,
}

impl StatevectorCheck {
    pub fn difference(&self) -> f64 {
        (self.evolved - self.closed_form).abs()
    }

    pub fn passed(&self) -> bool {
        self.difference() < CHECK_TOL
    }
}

/// Evolves a biased initial state and compares against the closed form.
pub fn check_statevector(
    size: usize,
    solution: usize,
    bias: Option<f64>,
    iterations: Option<u64>,
) -> Result<StatevectorCheck> {
    let bias = bias.unwrap_or(1.0 / (size as f64).sqrt());
    let psi = AmplitudeVector::biased(size, solution, bias)?;
    let iterations = iterations.unwrap_or_else(|| optimal_iterations(bias));
    Ok(StatevectorCheck {
        size,
        solution,
        bias,
        iterations,
        evolved: grover_success_probability(&psi, solution, iterations)?,
        closed_form: closed_form_success_probability(bias, iterations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_flips_one_sign() {
        let v = AmplitudeVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let w = apply_oracle(&v, 0).unwrap();
        assert_eq!(w.amplitudes(), &[-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(apply_oracle(&w, 0).unwrap(), v);
        assert!(apply_oracle(&v, 4).is_err());
    }

    #[test]
    fn reflection_eigenspaces() {
        let psi = AmplitudeVector::uniform(4).unwrap();
        let r = apply_reflection(&psi, &psi).unwrap();
        for (x, p) in r.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((x + p).abs() < 1e-15);
        }
        let orth = AmplitudeVector::normalized(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(apply_reflection(&orth, &psi).unwrap(), orth);
        let short = AmplitudeVector::uniform(3).unwrap();
        assert!(apply_reflection(&short, &psi).is_err());
    }

    #[test]
    fn four_element_search_is_exact() {
        let psi = AmplitudeVector::uniform(4).unwrap();
        for s in 0..4 {
            let p = grover_success_probability(&psi, s, 1).unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_iterations_is_initial_weight() {
        let psi = AmplitudeVector::biased(10, 3, 0.4).unwrap();
        let p = grover_success_probability(&psi, 3, 0).unwrap();
        assert!((p - 0.16).abs() < 1e-15);
    }

    #[test]
    fn biased_256_element_case() {
        let psi = AmplitudeVector::biased(256, 17, 0.1).unwrap();
        let p = grover_success_probability(&psi, 17, 7).unwrap();
        // sin^2(15 asin 0.1), 40-digit arithmetic
        assert!((p - 0.995_344_400_357_599).abs() < 1e-10);
        assert!((closed_form_success_probability(0.1, 7) - 0.995_344_400_357_599).abs() < 1e-14);
    }

    #[test]
    fn default_check_passes() {
        let check = check_statevector(1024, 5, None, None).unwrap();
        assert_eq!(check.iterations, 25);
        assert!(check.passed());
        assert!(check.evolved > 0.99);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(AmplitudeVector::new(vec![1.0, 1.0]).is_err());
        assert!(AmplitudeVector::normalized(vec![0.0, 0.0]).is_err());
        assert!(AmplitudeVector::biased(4, 0, 1.0).is_err());
    }
}
