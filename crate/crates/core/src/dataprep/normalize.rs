use serde::{Deserialize, Serialize};

use super::embed::{DesignMatrix, FeatureMatrix};

/// Min-max statistics of one feature, captured on training rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: f64,
    pub max: f64,
}

impl FeatureScale {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if min > max {
            return Self { min: 0.0, max: 0.0 };
        }
        Self { min, max }
    }

    /// Zero-span feature; scaled to the constant 0.5.
    pub fn is_constant(&self) -> bool {
        !(self.max > self.min)
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

pub fn fit_scales(x: &FeatureMatrix) -> Vec<FeatureScale> {
    (0..x.n_cols()).map(|j| FeatureScale::fit(x.rows().map(|r| r[j]))).collect()
}

/// Scales with stored statistics. Values outside the training span map
/// outside [0, 1] and are kept as-is.
pub fn apply_scales(x: &FeatureMatrix, scales: &[FeatureScale]) -> FeatureMatrix {
    debug_assert_eq!(x.n_cols(), scales.len());
    x.map_columns(|j, v| scales[j].apply(v))
}

/// Min-max normalizes training features, recording the statistics.
/// A matrix that already carries statistics is returned unchanged.
pub fn normalize(dm: &DesignMatrix) -> DesignMatrix {
    if dm.norm_stats.is_some() {
        return dm.clone();
    }
    let scales = fit_scales(&dm.x);
    for (s, name) in scales.iter().zip(&dm.feature_names) {
        if s.is_constant() {
            log::warn!("feature `{name}` is constant; scaled to 0.5");
        }
    }
    DesignMatrix {
        x: apply_scales(&dm.x, &scales),
        norm_stats: Some(scales),
        ..dm.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(col: Vec<f64>) -> DesignMatrix {
        let n = col.len();
        DesignMatrix::from_columns(&[col], vec![0.0; n]).unwrap()
    }

    #[test]
    fn hand_min_max() {
        let n = normalize(&dm(vec![2.0, 4.0, 6.0]));
        assert_eq!(n.x.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(n.norm_stats.unwrap()[0], FeatureScale { min: 2.0, max: 6.0 });
    }

    #[test]
    fn unit_span_unchanged() {
        let v = vec![0.0, 0.3, 0.7, 1.0];
        assert_eq!(normalize(&dm(v.clone())).x.column(0), v);
    }

    #[test]
    fn constant_maps_to_half_and_is_flagged() {
        let n = normalize(&dm(vec![3.0, 3.0]));
        assert_eq!(n.x.column(0), vec![0.5, 0.5]);
        assert!(n.norm_stats.unwrap()[0].is_constant());
    }

    #[test]
    fn test_rows_are_not_clipped() {
        let s = FeatureScale { min: 0.0, max: 2.0 };
        assert_eq!(s.apply(3.0), 1.5);
        assert_eq!(s.apply(-1.0), -0.5);
        assert_eq!(s.invert(s.apply(1.25)), 1.25);
    }
}
