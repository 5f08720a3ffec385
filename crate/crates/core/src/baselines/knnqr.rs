//! k-nearest-neighbors quantile regression: training stores the data, every
//! prediction searches it.

use std::sync::atomic::AtomicUsize;

use serde::{Deserialize, Serialize};

use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nnqf::{brute_force_query, interpolate_sorted, validate_levels, SearchParams};
use crate::regressors::{clamp_non_crossing, read_header, write_container, InputSchema, QuantilePredictor};

pub const KNNQR_KIND: &str = "knnqr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnqrModel {
    pub schema: InputSchema,
    pub levels: Vec<f64>,
    pub n_neighbors: usize,
    pub weights: Vec<f64>,
    #[serde(with = "crate::serde_f64")]
    pub epsilon: f64,
    x: FeatureMatrix,
    y: Vec<f64>,
}

impl KnnqrModel {
    /// Stores the training set. `n_neighbors` larger than the row count is
    /// rejected here rather than clamped, since every query would otherwise
    /// silently average the whole sample.
    pub fn fit(x: FeatureMatrix, y: Vec<f64>, n_neighbors: usize, weights: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        validate_levels(&levels)?;
        if x.n_rows() != y.len() {
            return Err(Error::dim(x.n_rows(), y.len()));
        }
        if weights.len() != x.n_cols() {
            return Err(Error::dim(x.n_cols(), weights.len()));
        }
        if n_neighbors == 0 || n_neighbors > x.n_rows() {
            return Err(Error::Config(format!(
                "n_neighbors {n_neighbors} must lie in 1..={}",
                x.n_rows()
            )));
        }
        Ok(Self {
            schema: InputSchema::plain(x.n_cols()),
            levels,
            n_neighbors,
            weights,
            epsilon: f64::INFINITY,
            x,
            y,
        })
    }

    pub fn with_schema(mut self, schema: InputSchema) -> Result<Self> {
        if schema.n_inputs() != self.x.n_cols() {
            return Err(Error::dim(self.x.n_cols(), schema.n_inputs()));
        }
        self.schema = schema;
        Ok(self)
    }

    pub fn n_train(&self) -> usize {
        self.y.len()
    }

    /// Raw neighbor quantiles; `visits` counts distance evaluations.
    pub fn predict_counted(&self, x: &[f64], visits: Option<&AtomicUsize>) -> Result<Vec<f64>> {
        if x.len() != self.x.n_cols() {
            return Err(Error::dim(self.x.n_cols(), x.len()));
        }
        let params = SearchParams { k: self.n_neighbors, epsilon: self.epsilon, weights: &self.weights };
        let nb = brute_force_query(&self.x, x, params, visits);
        if nb.is_empty() {
            return Err(Error::EmptySample("no stored row within epsilon of the query".into()));
        }
        let mut v: Vec<f64> = nb.indices.iter().map(|&j| self.y[j]).collect();
        v.sort_unstable_by(f64::total_cmp);
        Ok(self.levels.iter().map(|&q| interpolate_sorted(&v, q)).collect())
    }

    pub fn predict_matrix_counted(&self, x: &FeatureMatrix, visits: &AtomicUsize) -> Result<Vec<Vec<f64>>> {
        crate::par::try_map_range(x.n_rows(), |i| {
            let mut v = self.predict_counted(x.row(i), Some(visits))?;
            clamp_non_crossing(&mut v);
            Ok(v)
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        write_container(KNNQR_KIND, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let kind = read_header(bytes)?;
        if kind != KNNQR_KIND {
            return Err(Error::Format(format!("expected a {KNNQR_KIND} container, found {kind}")));
        }
        #[derive(Deserialize)]
        struct In {
            model: KnnqrModel,
        }
        let m = serde_json::from_slice::<In>(bytes)
            .map_err(|e| Error::Format(format!("malformed model container: {e}")))?
            .model;
        if m.x.n_rows() != m.y.len() || m.weights.len() != m.x.n_cols() {
            return Err(Error::Format("stored training set is inconsistent".into()));
        }
        Ok(m)
    }
}

impl QuantilePredictor for KnnqrModel {
    fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn schema(&self) -> &InputSchema {
        &self.schema
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_counted(x, None)
    }
}

/// Clamped kNN quantile estimates for one query at `levels`.
pub fn knnqr_predict(model: &KnnqrModel, x: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if levels == model.levels.as_slice() {
        return model.predict_clamped(x);
    }
    let mut m = model.clone();
    validate_levels(levels)?;
    m.levels = levels.to_vec();
    m.predict_clamped(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k: usize) -> KnnqrModel {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]]).unwrap();
        KnnqrModel::fit(x, vec![0.0, 1.0, 2.0, 10.0], k, vec![1.0], vec![0.5]).unwrap()
    }

    #[test]
    fn two_neighbors_median() {
        assert_eq!(knnqr_predict(&model(2), &[0.05], &[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn exact_match_one_neighbor() {
        let m = model(1);
        let levels = crate::percentile_levels();
        assert!(knnqr_predict(&m, &[2.0], &levels).unwrap().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn all_rows_give_sample_median() {
        assert_eq!(knnqr_predict(&model(4), &[5.0], &[0.5]).unwrap(), vec![1.5]);
    }

    #[test]
    fn visits_scale_with_stored_rows() {
        let m = model(2);
        let v = AtomicUsize::new(0);
        m.predict_counted(&[0.3], Some(&v)).unwrap();
        assert_eq!(v.into_inner(), 4);
    }

    #[test]
    fn container_round_trip() {
        let m = model(2);
        let back = KnnqrModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let poly = crate::regressors::write_container("nnqf-polynomial", &1).unwrap();
        assert!(matches!(KnnqrModel::from_bytes(&poly), Err(Error::Format(_))));
    }
}
