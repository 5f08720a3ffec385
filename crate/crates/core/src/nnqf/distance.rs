use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};

/// Weighted Euclidean distance `sqrt(Σ w_d (a_d - b_d)²)`.
pub fn weighted_distance(a: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    if weights.len() != a.len() {
        return Err(Error::dim(a.len(), weights.len()));
    }
    Ok(distance(a, b, weights))
}

/// Unchecked kernel shared by every search path. Summation order is fixed
/// (ascending feature index) so all callers see bit-identical values.
#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let diff = a[d] - b[d];
        s += w[d] * diff * diff;
    }
    s.sqrt()
}

/// Inverse of each feature's (population) variance; zero-variance features
/// get weight 0.
pub fn inverse_variance_weights(x: &FeatureMatrix) -> Vec<f64> {
    let n = x.n_rows() as f64;
    (0..x.n_cols())
        .map(|j| {
            let mean = x.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = x.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 && var.is_finite() {
                1.0 / var
            } else {
                0.0
            }
        })
        .collect()
}
