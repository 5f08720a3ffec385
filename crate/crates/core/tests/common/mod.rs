//! Reference implementations written independently of the crate, used as
//! oracles by the property and acceptance suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Neighbors of row `i` by exhaustive scan: weighted Euclidean distance,
/// ordered by (distance, index), kept when within `epsilon`, first `k`.
pub fn exhaustive_neighbors(rows: &[Vec<f64>], weights: &[f64], i: usize, k: usize, epsilon: f64) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mut s = 0.0;
            for d in 0..r.len() {
                let diff = rows[i][d] - r[d];
                s += weights[d] * diff * diff;
            }
            (j, s.sqrt())
        })
        .filter(|(_, d)| *d <= epsilon)
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Piecewise-linear quantile through the knots `((i - 0.5) / n, v_i)`,
/// `i = 1..=n`, flat outside the first and last knot.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let knot = |i: usize| (i as f64 - 0.5) / n as f64;
    if q <= knot(1) {
        return sorted[0];
    }
    if q >= knot(n) {
        return sorted[n - 1];
    }
    let mut i = 1;
    while knot(i + 1) < q {
        i += 1;
    }
    let (p0, p1) = (knot(i), knot(i + 1));
    let t = (q - p0) / (p1 - p0);
    sorted[i - 1] * (1.0 - t) + sorted[i] * t
}

/// Pinball loss summed over a sample.
pub fn pinball_sum(y: &[f64], c: f64, q: f64) -> f64 {
    y.iter().map(|&v| if v >= c { q * (v - c) } else { (1.0 - q) * (c - v) }).sum()
}

/// Minimum of the summed pinball loss over constant predictions. The
/// objective is piecewise linear with kinks at the sample points, so the
/// optimum is attained at one of them.
pub fn best_constant(y: &[f64], q: f64) -> f64 {
    y.iter().map(|&c| pinball_sum(y, c, q)).fold(f64::INFINITY, f64::min)
}

/// Random matrix with values in `[lo, hi)`, optionally rounded to a coarse
/// grid so that distance ties are common.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, quantize: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let v: f64 = rng.random();
                    if quantize {
                        (v * 4.0).floor() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
