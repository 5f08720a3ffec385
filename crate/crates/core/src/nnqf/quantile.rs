use crate::error::{Error, Result};

/// Plotting position of the `i`-th (0-based) of `n` order statistics,
/// `(i + 0.5) / n`.
#[inline]
pub fn plotting_position(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// Empirical `q`-quantile of ascending `sorted_values`.
///
/// The order statistics sit at plotting positions `(i - 0.5) / n`
/// (1-based `i`); the quantile is linear between bracketing positions and
/// clamps to the first/last value outside them.
pub fn empirical_quantile(sorted_values: &[f64], q: f64) -> Result<f64> {
    if sorted_values.is_empty() {
        return Err(Error::Contract("empirical quantile of an empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level {q} outside (0, 1)")));
    }
    if cfg!(debug_assertions) && sorted_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("empirical quantile input is not sorted".into()));
    }
    Ok(interpolate_sorted(sorted_values, q))
}

/// Unchecked kernel behind [`empirical_quantile`].
#[inline]
pub(crate) fn interpolate_sorted(v: &[f64], q: f64) -> f64 {
    let n = v.len();
    if q < plotting_position(0, n) {
        return v[0];
    }
    if q >= plotting_position(n - 1, n) {
        return v[n - 1];
    }
    // Upper bracket index `hi` satisfies pos(hi-1) <= q < pos(hi). Start
    // from the arithmetic guess and correct against the exact positions.
    let mut hi = ((q * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
    while hi > 1 && q < plotting_position(hi - 1, n) {
        hi -= 1;
    }
    while hi < n - 1 && q >= plotting_position(hi, n) {
        hi += 1;
    }
    let (q0, q1) = (plotting_position(hi - 1, n), plotting_position(hi, n));
    (v[hi] - v[hi - 1]) / (q1 - q0) * (q - q0) + v[hi - 1]
}
