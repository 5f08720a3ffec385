//! How training and application cost grow with the training set size.

use std::sync::atomic::AtomicUsize;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pipeline::{prepare_training, PipelineConfig, PreparedTraining};
use super::tasks::TaskWindow;
use crate::baselines::KnnqrModel;
use crate::dataprep::{build_inputs, FeatureMatrix, RowFilter, TimeSeriesTable};
use crate::error::{Error, Result};
use crate::nnqf::apply_filter;
use crate::regressors::{fit_polynomial_constrained, PolynomialSpec, QuantilePredictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Fractions of the training rows, each in (0, 1].
    pub fractions: Vec<f64>,
    pub n_neighbors: usize,
    pub degree: u32,
    /// Application timings are the minimum over this many runs.
    pub repeats: usize,
    /// Caps the number of test rows to keep kNN queries affordable.
    pub max_test_rows: Option<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { fractions: vec![0.25, 0.5, 0.75, 1.0], n_neighbors: 50, degree: 1, repeats: 3, max_test_rows: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub filter_seconds: f64,
    pub fit_seconds: f64,
    pub nnqf_apply_seconds: f64,
    pub knnqr_apply_seconds: f64,
    /// Distance evaluations of the kNN baseline over all test rows.
    pub knnqr_visits: usize,
}

fn min_time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        f()?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Trains a filtered polynomial and a kNN baseline on growing prefixes of
/// `data` and applies both to `test_x` (already prepared with `data`'s
/// schema).
pub fn scaling_study(
    data: &PreparedTraining,
    test_x: &FeatureMatrix,
    cfg: &PipelineConfig,
    sc: &ScalingConfig,
) -> Result<Vec<ScalingRecord>> {
    if sc.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config("scaling fractions must lie in (0, 1]".into()));
    }
    let spec = PolynomialSpec::new(sc.degree)?;
    let n = data.y.len();
    sc.fractions
        .iter()
        .map(|&fraction| {
            let rows = ((n as f64 * fraction).round() as usize).max(1);
            let part = data.head(rows);
            let dm = part.design_matrix()?;

            let t0 = Instant::now();
            let targets = apply_filter(&dm, &part.nnqf_config(cfg, sc.n_neighbors))?;
            let filter_seconds = t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let model = fit_polynomial_constrained(&part.x, &targets, spec)?;
            let fit_seconds = t0.elapsed().as_secs_f64();

            let nnqf_apply_seconds = min_time(sc.repeats, || model.predict_matrix(test_x).map(drop))?;

            let knn = KnnqrModel::fit(part.x.clone(), part.y.clone(), sc.n_neighbors, part.weights.clone(), cfg.levels.clone())?;
            let visits = AtomicUsize::new(0);
            let t0 = Instant::now();
            knn.predict_matrix_counted(test_x, &visits)?;
            let knnqr_apply_seconds = t0.elapsed().as_secs_f64();

            Ok(ScalingRecord {
                fraction,
                train_rows: rows,
                test_rows: test_x.n_rows(),
                filter_seconds,
                fit_seconds,
                nnqf_apply_seconds,
                knnqr_apply_seconds,
                knnqr_visits: visits.into_inner(),
            })
        })
        .collect()
}

/// Runs the study on one table and window.
pub fn scaling_on_window(
    table: &TimeSeriesTable,
    window: &TaskWindow,
    cfg: &PipelineConfig,
    sc: &ScalingConfig,
) -> Result<Vec<ScalingRecord>> {
    let data = prepare_training(table, window.train.clone(), window.test.start, cfg)?;
    let inputs = build_inputs(table, &cfg.embedding, &RowFilter { target_steps: Some(window.test.clone()), exclude: None })?;
    let mut x = data.schema.prepare(&inputs.x)?;
    if let Some(cap) = sc.max_test_rows {
        if x.n_rows() > cap {
            x = x.select_rows(&(0..cap).collect::<Vec<_>>());
        }
    }
    scaling_study(&data, &x, cfg, sc)
}
