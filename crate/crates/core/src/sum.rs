//! Deterministic pairwise (tree) summation.
//!
//! Every quadrature in this crate reduces through these helpers. The tree
//! shape depends only on the index range, never on thread scheduling, so
//! sums are reproducible bit-for-bit. Using the *same* tree shape for a
//! signed sum and for the sum of absolute values also makes the triangle
//! inequality `|sum(a_i)| <= sum(|a_i|)` hold exactly in floating point:
//! rounding is monotone, so the bound propagates through every node.

const LEAF: usize = 32;

/// Pairwise sum of `f(i)` for `i` in `0..n` without allocating.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    sum_range(0, n, &f)
}

fn sum_range<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    let len = hi - lo;
    if len <= LEAF {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    } else {
        let mid = lo + len / 2;
        sum_range(lo, mid, f) + sum_range(mid, hi, f)
    }
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn triangle_inequality_is_exact_for_matched_trees() {
        // Adversarial signs and magnitudes; the matched-shape bound must
        // hold as a plain `<=` on the computed doubles.
        let xs: Vec<f64> = (0..10_000)
            .map(|i| {
                let t = i as f64 * 0.77;
                t.sin() * 10f64.powf((i % 31) as f64 - 15.0)
            })
            .collect();
        let signed = pairwise_sum(&xs);
        let abs = pairwise_sum_by(xs.len(), |i| xs[i].abs());
        assert!(signed.abs() <= abs);
    }

    #[test]
    fn accuracy_on_ill_conditioned_input() {
        // 1 + n*eps-scale tail; pairwise keeps the tail.
        let n = 1 << 20;
        let mut xs = vec![1e-16; n];
        xs[0] = 1.0;
        let s = pairwise_sum(&xs);
        let expected = 1.0 + (n as f64 - 1.0) * 1e-16;
        assert!((s - expected).abs() / expected < 1e-12);
    }
}
