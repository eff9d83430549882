//! Deterministic reductions shared by the cost evaluator and the optimizer.

const BLOCK: usize = 64;

/// Pairwise (cascade) summation with a fixed split order.
///
/// The result depends only on the input order, never on thread count, so
/// every reduction over the search set is bit-reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

/// Pairwise summation of `term(0) + ... + term(len - 1)` without materializing the terms.
pub fn pairwise_sum_by<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo <= BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, len, &term)
}

/// Shortest round-trip decimal text for a real, in exponent form when
/// plain notation would be long.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
