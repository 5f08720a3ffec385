//! Train-then-forecast runs over task windows.

use std::ops::Range;
use std::sync::atomic::AtomicUsize;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{average_pinball, pinball_loss, reliability, skill_score, DayFilter, EffortRecord, Machine, Phase};
use super::tasks::TaskWindow;
use crate::baselines::{fit_tqr, KnnqrModel, TqrModel};
use crate::dataprep::{
    build_design_matrix_filtered, build_inputs, fit_scales, forward_select, night_mask, read_targets, DesignMatrix,
    EmbeddingSpec, FeatureMatrix, GuardedTable, RowFilter, TimeSeriesTable,
};
use crate::error::{Error, Result, Warning};
use crate::nnqf::{apply_filter, inverse_variance_weights, ModifiedTargets, NnqfConfig, SearchStrategy};
use crate::regressors::{
    fit_network, fit_polynomial_constrained, InputSchema, NetworkSpec, PolynomialSpec, QuantileModelSet,
    QuantilePredictor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightFilter {
    pub channel: String,
    /// Radiation at or below this value counts as night.
    pub threshold: f64,
}

/// One model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Polynomial { degree: u32, n_neighbors: usize },
    Network { hidden_units: usize, n_neighbors: usize },
    Knnqr { n_neighbors: usize },
    Tqr { degree: u32 },
}

impl ModelSpec {
    /// Short name such as `Poly1(200)`, `ANN10(50)`, `kNNQR(50)`, `TQR-Poly1`.
    pub fn label(&self) -> String {
        match self {
            Self::Polynomial { degree, n_neighbors } => format!("Poly{degree}({n_neighbors})"),
            Self::Network { hidden_units, n_neighbors } => format!("ANN{hidden_units}({n_neighbors})"),
            Self::Knnqr { n_neighbors } => format!("kNNQR({n_neighbors})"),
            Self::Tqr { degree } => format!("TQR-Poly{degree}"),
        }
    }

    /// Neighbor count of the filter this model trains on, if any.
    pub fn filter_neighbors(&self) -> Option<usize> {
        match self {
            Self::Polynomial { n_neighbors, .. } | Self::Network { n_neighbors, .. } => Some(*n_neighbors),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub embedding: EmbeddingSpec,
    pub night: Option<NightFilter>,
    /// Features kept by forward selection; `None` keeps all.
    pub selected_features: Option<usize>,
    pub levels: Vec<f64>,
    #[serde(with = "crate::serde_f64")]
    pub epsilon: f64,
    pub search: SearchStrategy,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub machine: Machine,
    /// Reliability day filter threshold; `None` scores every row.
    pub day_threshold: Option<f64>,
}

impl PipelineConfig {
    pub fn new(embedding: EmbeddingSpec) -> Self {
        Self {
            embedding,
            night: None,
            selected_features: Some(4),
            levels: crate::percentile_levels(),
            epsilon: f64::INFINITY,
            search: SearchStrategy::Auto,
            epochs: 2000,
            learning_rate: 0.5,
            seed: 0,
            machine: Machine::default(),
            day_threshold: None,
        }
    }

    pub fn network_spec(&self, hidden_units: usize) -> NetworkSpec {
        NetworkSpec { hidden_units, epochs: self.epochs, learning_rate: self.learning_rate, seed: self.seed }
    }
}

/// Normalized, feature-selected training data of one series.
#[derive(Debug, Clone)]
pub struct PreparedTraining {
    pub schema: InputSchema,
    /// Model inputs (selected and scaled).
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    /// Reads of hidden power values while building the matrix.
    pub guarded_reads: usize,
    pub selection_seconds: f64,
}

impl PreparedTraining {
    pub fn design_matrix(&self) -> Result<DesignMatrix> {
        let n = self.y.len();
        let mut dm = DesignMatrix::new(self.x.clone(), self.y.clone(), (0..n).collect(), self.schema.feature_names.clone())?;
        dm.norm_stats = self.schema.scales.clone();
        Ok(dm)
    }

    /// Keeps the first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let rows: Vec<usize> = (0..n.min(self.y.len())).collect();
        Self { x: self.x.select_rows(&rows), y: rows.iter().map(|&r| self.y[r]).collect(), ..self.clone() }
    }

    pub fn nnqf_config(&self, cfg: &PipelineConfig, n_neighbors: usize) -> NnqfConfig {
        NnqfConfig {
            n_neighbors,
            epsilon: cfg.epsilon,
            weights: self.weights.clone(),
            levels: cfg.levels.clone(),
            search: cfg.search,
        }
    }
}

fn mask_for(table: &TimeSeriesTable, cfg: &PipelineConfig) -> Result<Option<Vec<bool>>> {
    cfg.night
        .as_ref()
        .map(|n| night_mask(table, &n.channel, n.threshold, cfg.embedding.horizon))
        .transpose()
}

/// Builds the training matrix for targets in `train`, with the power
/// channel hidden from `hidden_from` onwards, then selects features,
/// normalizes them and derives distance weights.
pub fn prepare_training(
    table: &TimeSeriesTable,
    train: Range<usize>,
    hidden_from: usize,
    cfg: &PipelineConfig,
) -> Result<PreparedTraining> {
    let power = table
        .power_name()
        .ok_or_else(|| Error::Schema("table has no power channel".into()))?;
    let guard = GuardedTable::new(table, power, hidden_from..table.len())?;
    let mask = mask_for(table, cfg)?;
    let filter = RowFilter { target_steps: Some(train), exclude: mask.as_deref() };
    let dm = build_design_matrix_filtered(&guard, &cfg.embedding, &filter)?;
    let guarded_reads = guard.guarded_reads();
    if dm.n_rows() == 0 {
        return Err(Error::InsufficientData("no complete training rows in the window".into()));
    }
    let t0 = Instant::now();
    let selected: Vec<usize> = match cfg.selected_features {
        Some(c) if c < dm.n_features() => forward_select(&dm, c)?.selected,
        _ => (0..dm.n_features()).collect(),
    };
    let selection_seconds = t0.elapsed().as_secs_f64();
    let raw = dm.x.select_columns(&selected);
    let scales = fit_scales(&raw);
    let schema = InputSchema {
        feature_names: selected.iter().map(|&j| dm.feature_names[j].clone()).collect(),
        source_features: dm.feature_names.clone(),
        selected,
        scales: Some(scales),
    };
    let x = schema.prepare(&dm.x)?;
    let weights = inverse_variance_weights(&x);
    Ok(PreparedTraining { schema, x, y: dm.y, weights, guarded_reads, selection_seconds })
}

/// A fitted model of any family.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Set(QuantileModelSet),
    Knnqr(KnnqrModel),
    Tqr(TqrModel),
}

impl TrainedModel {
    pub fn predictor(&self) -> &dyn QuantilePredictor {
        match self {
            Self::Set(m) => m,
            Self::Knnqr(m) => m,
            Self::Tqr(m) => m,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Self::Set(m) => crate::regressors::serialize_models(m),
            Self::Knnqr(m) => m.to_bytes(),
            Self::Tqr(m) => m.to_bytes(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match crate::regressors::read_header(bytes)?.as_str() {
            crate::baselines::KNNQR_KIND => KnnqrModel::from_bytes(bytes).map(Self::Knnqr),
            "tqr-polynomial" => TqrModel::from_bytes(bytes).map(Self::Tqr),
            _ => crate::regressors::deserialize_models(bytes).map(Self::Set),
        }
    }

    pub fn warnings(&self) -> &[Warning] {
        match self {
            Self::Set(m) => &m.warnings,
            Self::Tqr(m) => &m.0.warnings,
            Self::Knnqr(_) => &[],
        }
    }
}

/// Fits one model. `targets` must hold the filter output for the spec's
/// neighbor count when it has one.
pub fn fit_model(
    spec: &ModelSpec,
    data: &PreparedTraining,
    targets: Option<&ModifiedTargets>,
    cfg: &PipelineConfig,
) -> Result<TrainedModel> {
    let need = || Error::Contract(format!("{} needs filtered targets", spec.label()));
    let model = match spec {
        ModelSpec::Polynomial { degree, .. } => {
            let m = fit_polynomial_constrained(&data.x, targets.ok_or_else(need)?, PolynomialSpec::new(*degree)?)?;
            TrainedModel::Set(m.with_schema(data.schema.clone())?)
        }
        ModelSpec::Network { hidden_units, .. } => {
            let m = fit_network(&data.x, targets.ok_or_else(need)?, &cfg.network_spec(*hidden_units))?;
            TrainedModel::Set(m.with_schema(data.schema.clone())?)
        }
        ModelSpec::Knnqr { n_neighbors } => {
            let m = KnnqrModel::fit(data.x.clone(), data.y.clone(), *n_neighbors, data.weights.clone(), cfg.levels.clone())?;
            let mut m = m.with_schema(data.schema.clone())?;
            m.epsilon = cfg.epsilon;
            TrainedModel::Knnqr(m)
        }
        ModelSpec::Tqr { degree } => {
            let m = fit_tqr(&data.x, &data.y, PolynomialSpec::new(*degree)?, &cfg.levels)?;
            TrainedModel::Tqr(m.with_schema(data.schema.clone())?)
        }
    };
    Ok(model)
}

/// Clamped forecasts for targets in `target_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// Issue step `k` of each row; the forecast is for `k + H`.
    pub row_timesteps: Vec<usize>,
    pub horizon: usize,
    pub levels: Vec<f64>,
    /// `values[row][level]`.
    pub values: Vec<Vec<f64>>,
    pub night: Vec<bool>,
    /// Distance evaluations spent, for kNN models.
    pub visits: Option<usize>,
}

impl Forecast {
    pub fn target_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.row_timesteps.iter().map(move |k| k + self.horizon)
    }
}

/// Forecasts every target step in `target_steps` with complete inputs.
/// Night rows are set to zero at every level.
pub fn forecast(
    table: &TimeSeriesTable,
    model: &TrainedModel,
    cfg: &PipelineConfig,
    target_steps: Range<usize>,
) -> Result<Forecast> {
    let inputs = build_inputs(table, &cfg.embedding, &RowFilter { target_steps: Some(target_steps), exclude: None })?;
    let p = model.predictor();
    let x = p.schema().prepare(&inputs.x)?;
    let visits = AtomicUsize::new(0);
    let mut values = match model {
        TrainedModel::Knnqr(m) => m.predict_matrix_counted(&x, &visits)?,
        _ => p.predict_matrix(&x)?,
    };
    let mask = mask_for(table, cfg)?;
    let night: Vec<bool> = inputs
        .row_timesteps
        .iter()
        .map(|&k| mask.as_ref().is_some_and(|m| m[k]))
        .collect();
    for (row, &n) in values.iter_mut().zip(&night) {
        if n {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(Forecast {
        row_timesteps: inputs.row_timesteps,
        horizon: cfg.embedding.horizon,
        levels: p.levels().to_vec(),
        values,
        night,
        visits: matches!(model, TrainedModel::Knnqr(_)).then(|| visits.into_inner()),
    })
}

/// Scores of one model on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub rows: usize,
    pub per_level: Vec<f64>,
    pub q_pl: f64,
    pub skill: Option<f64>,
    /// `None` where the day filter left no rows.
    pub reliability: Vec<Option<f64>>,
}

/// Scores pooled observations `y` against forecasts `values[row][level]`.
pub fn score(
    model: &str,
    levels: &[f64],
    y: &[f64],
    values: &[Vec<f64>],
    benchmark: Option<f64>,
    day_threshold: Option<f64>,
) -> Result<ModelScore> {
    if y.len() != values.len() {
        return Err(Error::dim(y.len(), values.len()));
    }
    let column = |l: usize| values.iter().map(|r| r[l]).collect::<Vec<f64>>();
    let median = levels.iter().position(|&q| q == 0.5).map(column);
    let mut per_level = Vec::with_capacity(levels.len());
    let mut rel = Vec::with_capacity(levels.len());
    for (l, &q) in levels.iter().enumerate() {
        let yhat = column(l);
        per_level.push(pinball_loss(y, &yhat, q)?);
        let filter = match (day_threshold, &median) {
            (Some(threshold), Some(m)) => Some(DayFilter { threshold, median: m }),
            (Some(threshold), None) => Some(DayFilter { threshold, median: y }),
            _ => None,
        };
        rel.push(match reliability(y, &yhat, filter) {
            Ok(r) => Some(r),
            Err(Error::EmptySample(_)) => None,
            Err(e) => return Err(e),
        });
    }
    let q_pl = average_pinball(&per_level, levels.len())?;
    let skill = benchmark.map(|b| skill_score(q_pl, b)).transpose()?;
    Ok(ModelScore { model: model.to_string(), rows: y.len(), per_level, q_pl, skill, reliability: rel })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub model: String,
    /// Filter time included in `training`.
    pub filter_seconds: f64,
    pub fit_seconds: f64,
    pub training: EffortRecord,
    pub application: EffortRecord,
    pub knnqr_visits: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: u32,
    /// Benchmark loss the skill scores refer to.
    pub benchmark: Option<f64>,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Hidden power reads attempted during training (must be zero).
    pub guarded_reads: usize,
    /// Selected feature names per series.
    pub selected_features: Vec<Vec<String>>,
    pub scores: Vec<ModelScore>,
    pub timings: Vec<ModelTiming>,
    pub warnings: Vec<Warning>,
}

/// Trains every model on the window's training span of every series,
/// forecasts the test span, and scores the pooled forecasts.
pub fn run_task(
    series: &[&TimeSeriesTable],
    window: &TaskWindow,
    cfg: &PipelineConfig,
    models: &[ModelSpec],
    benchmark: Option<f64>,
) -> Result<TaskReport> {
    crate::nnqf::validate_levels(&cfg.levels)?;
    if series.is_empty() || models.is_empty() {
        return Err(Error::Config("run_task needs at least one series and one model".into()));
    }
    for t in series {
        if window.test.end > t.len() {
            return Err(Error::InsufficientData(format!(
                "task {} test span ends at {} but the data has {} steps",
                window.id,
                window.test.end,
                t.len()
            )));
        }
    }
    let n_models = models.len();
    let mut pooled_y: Vec<Vec<f64>> = vec![Vec::new(); n_models];
    let mut pooled_f: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_models];
    let mut filter_s = vec![0.0; n_models];
    let mut fit_s = vec![0.0; n_models];
    let mut apply_s = vec![0.0; n_models];
    let mut visits: Vec<Option<usize>> = vec![None; n_models];
    let mut report = TaskReport {
        task: window.id,
        benchmark,
        train_rows: 0,
        test_rows: 0,
        guarded_reads: 0,
        selected_features: Vec::new(),
        scores: Vec::new(),
        timings: Vec::new(),
        warnings: Vec::new(),
    };

    for table in series {
        let data = prepare_training(table, window.train.clone(), window.test.start, cfg)?;
        report.train_rows += data.y.len();
        report.guarded_reads += data.guarded_reads;
        report.selected_features.push(data.schema.feature_names.clone());
        let dm = data.design_matrix()?;

        // One filter pass per distinct neighbor count.
        let mut filtered: Vec<(usize, ModifiedTargets, f64)> = Vec::new();
        for spec in models {
            if let Some(k) = spec.filter_neighbors() {
                if !filtered.iter().any(|(n, _, _)| *n == k) {
                    let t0 = Instant::now();
                    let t = apply_filter(&dm, &data.nnqf_config(cfg, k))?;
                    let secs = t0.elapsed().as_secs_f64();
                    report.warnings.extend(t.warnings.iter().cloned());
                    filtered.push((k, t, secs));
                }
            }
        }

        let mut steps_for_targets: Option<Vec<usize>> = None;
        for (m, spec) in models.iter().enumerate() {
            let targets = spec
                .filter_neighbors()
                .and_then(|k| filtered.iter().find(|(n, _, _)| *n == k));
            if let Some((_, _, secs)) = targets {
                filter_s[m] += secs;
            }
            let t0 = Instant::now();
            let model = fit_model(spec, &data, targets.map(|(_, t, _)| t), cfg)?;
            fit_s[m] += t0.elapsed().as_secs_f64();
            report.warnings.extend(model.warnings().iter().cloned());

            let t0 = Instant::now();
            let fc = forecast(table, &model, cfg, window.test.clone())?;
            apply_s[m] += t0.elapsed().as_secs_f64();
            if let Some(v) = fc.visits {
                *visits[m].get_or_insert(0) += v;
            }

            // Observations are read only after forecasting.
            let steps = steps_for_targets.get_or_insert_with(|| fc.row_timesteps.clone());
            debug_assert_eq!(*steps, fc.row_timesteps);
            let observed = read_targets(*table, &cfg.embedding, &fc.row_timesteps)?;
            for (row, obs) in fc.values.into_iter().zip(observed) {
                if let Some(y) = obs {
                    pooled_y[m].push(y);
                    pooled_f[m].push(row);
                }
            }
        }
    }

    report.test_rows = pooled_y[0].len();
    for (m, spec) in models.iter().enumerate() {
        if pooled_y[m].is_empty() {
            return Err(Error::InsufficientData(format!("task {}: no scorable test rows", window.id)));
        }
        let label = spec.label();
        report
            .scores
            .push(score(&label, &cfg.levels, &pooled_y[m], &pooled_f[m], benchmark, cfg.day_threshold)?);
        report.timings.push(ModelTiming {
            model: label,
            filter_seconds: filter_s[m],
            fit_seconds: fit_s[m],
            training: EffortRecord::new(Phase::Training, filter_s[m] + fit_s[m], cfg.machine),
            application: EffortRecord::new(Phase::Application, apply_s[m], cfg.machine),
            knnqr_visits: visits[m],
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Generator, SyntheticSpec};

    #[test]
    fn smoke_single_task() {
        let d = generate(&SyntheticSpec::new(Generator::HeteroscedasticLinear, 600, 1)).unwrap();
        let cfg = PipelineConfig { levels: vec![0.25, 0.5, 0.75], ..PipelineConfig::new(d.embedding.clone()) };
        let w = TaskWindow::single(1, d.table.len(), d.split).unwrap();
        let models = [
            ModelSpec::Polynomial { degree: 1, n_neighbors: 30 },
            ModelSpec::Knnqr { n_neighbors: 30 },
            ModelSpec::Tqr { degree: 1 },
        ];
        let r = run_task(&[&d.table], &w, &cfg, &models, None).unwrap();
        assert_eq!(r.guarded_reads, 0);
        assert_eq!(r.scores.len(), 3);
        assert_eq!(r.test_rows, 300);
        for s in &r.scores {
            assert!(s.q_pl > 0.0 && s.q_pl < 0.2, "{s:?}");
        }
        assert!(r.timings[1].knnqr_visits.unwrap() >= 300 * 299);
    }

    #[test]
    fn window_past_data_rejected() {
        let d = generate(&SyntheticSpec::new(Generator::HeteroscedasticLinear, 200, 1)).unwrap();
        let cfg = PipelineConfig::new(d.embedding.clone());
        let w = TaskWindow::new(1, 0..150, 150..260).unwrap();
        assert!(matches!(
            run_task(&[&d.table], &w, &cfg, &[ModelSpec::Knnqr { n_neighbors: 5 }], None),
            Err(Error::InsufficientData(_))
        ));
    }
}
