use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::FeatureScale;
use super::table::SeriesAccess;
use crate::error::{Error, Result};

/// Dense row-major matrix of features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 {
            if !data.is_empty() {
                return Err(Error::Contract("zero-column matrix with data".into()));
            }
        } else if !data.len().is_multiple_of(n_cols) {
            return Err(Error::dim(n_cols, data.len() % n_cols));
        }
        Ok(Self { data, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::dim(n_cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self { data, n_cols: cols.len() }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { data, n_cols: self.n_cols }
    }

    pub(crate) fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % self.n_cols, v))
            .collect();
        Self { data, n_cols: self.n_cols }
    }
}

/// How a design row is assembled from a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    /// Forecast horizon H in steps (≥ 1).
    pub horizon: usize,
    /// Number of lags H1 (≥ 0); each block covers offsets `0..=lags`.
    pub lags: usize,
    /// Channel whose value at `k + horizon` is the target.
    pub target: String,
    /// Include `target[k - j]` for `j = 0..=lags`.
    #[serde(default)]
    pub autoregressive: bool,
    /// Exogenous channels, stacked per lag in this order.
    #[serde(default)]
    pub exogenous: Vec<String>,
    /// Read exogenous channels at `k + horizon - j` instead of `k - j`
    /// (forecast inputs that are known at issue time).
    #[serde(default)]
    pub exogenous_at_horizon: bool,
}

impl EmbeddingSpec {
    /// `target[k+H]` from `target[k], ..., target[k-H1]`.
    pub fn autoregressive(target: &str, horizon: usize, lags: usize) -> Self {
        Self {
            horizon,
            lags,
            target: target.to_string(),
            autoregressive: true,
            exogenous: Vec::new(),
            exogenous_at_horizon: false,
        }
    }

    /// `target[k+H]` from exogenous forecasts at `k+H, k+H-1, ..., k+H-H1`.
    pub fn forecast_inputs(target: &str, channels: &[&str], horizon: usize, lags: usize) -> Self {
        Self {
            horizon,
            lags,
            target: target.to_string(),
            autoregressive: false,
            exogenous: channels.iter().map(|c| c.to_string()).collect(),
            exogenous_at_horizon: true,
        }
    }

    /// Exogenous channels read at `k - j` (no look-ahead).
    pub fn exogenous(target: &str, channels: &[&str], horizon: usize, lags: usize) -> Self {
        Self { exogenous_at_horizon: false, ..Self::forecast_inputs(target, channels, horizon, lags) }
    }

    pub fn feature_count(&self) -> usize {
        (usize::from(self.autoregressive) + self.exogenous.len()) * (self.lags + 1)
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.feature_count());
        let lag = |j: usize| if j == 0 { String::new() } else { format!("-{j}") };
        if self.autoregressive {
            for j in 0..=self.lags {
                names.push(format!("{}[k{}]", self.target, lag(j)));
            }
        }
        for j in 0..=self.lags {
            for c in &self.exogenous {
                if self.exogenous_at_horizon {
                    names.push(format!("{c}[k+{}{}]", self.horizon, lag(j)));
                } else {
                    names.push(format!("{c}[k{}]", lag(j)));
                }
            }
        }
        names
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.feature_count() == 0 {
            return Err(Error::Config("embedding produces no features".into()));
        }
        Ok(())
    }

    /// Range of issue steps `k` (0-based) that have a full window in a
    /// series of length `len`.
    pub fn valid_steps(&self, len: usize) -> Result<Range<usize>> {
        if len <= self.lags + self.horizon {
            return Err(Error::InsufficientData(format!(
                "need more than H1 + H = {} steps, have {len}",
                self.lags + self.horizon
            )));
        }
        Ok(self.lags..len - self.horizon)
    }

    /// Offsets (relative to `k`) read for every feature, in feature order.
    fn layout(&self, source: &dyn SeriesAccess) -> Result<Vec<(usize, isize)>> {
        let mut out = Vec::with_capacity(self.feature_count());
        if self.autoregressive {
            let t = source.channel_index(&self.target)?;
            out.extend((0..=self.lags).map(|j| (t, -(j as isize))));
        }
        let exo = self
            .exogenous
            .iter()
            .map(|c| source.channel_index(c))
            .collect::<Result<Vec<_>>>()?;
        let shift = if self.exogenous_at_horizon { self.horizon as isize } else { 0 };
        for j in 0..=self.lags {
            for &c in &exo {
                out.push((c, shift - j as isize));
            }
        }
        Ok(out)
    }
}

/// Training inputs with aligned targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    /// Issue step `k` (0-based) of each row; the target sits at `k + H`.
    pub row_timesteps: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Set once the matrix has been min-max normalized.
    pub norm_stats: Option<Vec<FeatureScale>>,
}

impl DesignMatrix {
    pub fn new(
        x: FeatureMatrix,
        y: Vec<f64>,
        row_timesteps: Vec<usize>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::dim(x.n_rows(), y.len()));
        }
        if row_timesteps.len() != y.len() {
            return Err(Error::dim(y.len(), row_timesteps.len()));
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::dim(x.n_cols(), feature_names.len()));
        }
        for (i, n) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(n) {
                return Err(Error::Schema(format!("duplicate feature name `{n}`")));
            }
        }
        Ok(Self { x, y, row_timesteps, feature_names, norm_stats: None })
    }

    /// Single-feature matrix, mostly for tests and synthetic studies.
    pub fn from_columns(columns: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        let x = if columns.is_empty() { FeatureMatrix::default() } else { FeatureMatrix::from_rows(&rows)? };
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, (0..n).collect(), names)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// Keeps the given feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::dim(self.n_features(), bad));
        }
        Ok(Self {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
            row_timesteps: self.row_timesteps.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            norm_stats: self.norm_stats.as_ref().map(|s| cols.iter().map(|&c| s[c]).collect()),
        })
    }

    /// Keeps the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            row_timesteps: rows.iter().map(|&r| self.row_timesteps[r]).collect(),
            feature_names: self.feature_names.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Writes `<stem>.csv` (features then `y`, plus the issue step) and a
    /// `<stem>.json` sidecar carrying feature names and scaling stats.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        let mut header = vec!["k".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("y".into());
        w.write_record(&header)?;
        for (i, row) in self.x.rows().enumerate() {
            let mut rec = vec![self.row_timesteps[i].to_string()];
            rec.extend(row.iter().map(f64::to_string));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        let sidecar = Sidecar { feature_names: self.feature_names.clone(), norm_stats: self.norm_stats.clone() };
        let mut f = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(&mut f, &sidecar).map_err(|e| Error::Format(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let f = std::fs::File::open(dir.join(format!("{stem}.json")))?;
        let sidecar: Sidecar = serde_json::from_reader(f).map_err(|e| Error::Format(e.to_string()))?;
        let mut rdr = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
        let d = sidecar.feature_names.len();
        let (mut data, mut y, mut ks) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 2 {
                return Err(Error::dim(d + 2, rec.len()));
            }
            let parse = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: j.to_string(),
                    value: rec[j].to_string(),
                })
            };
            ks.push(parse(0)? as usize);
            for j in 1..=d {
                data.push(parse(j)?);
            }
            y.push(parse(d + 1)?);
        }
        let mut dm = Self::new(FeatureMatrix::new(data, d)?, y, ks, sidecar.feature_names)?;
        dm.norm_stats = sidecar.norm_stats;
        Ok(dm)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    feature_names: Vec<String>,
    norm_stats: Option<Vec<FeatureScale>>,
}

/// Which issue steps become rows.
#[derive(Debug, Clone, Default)]
pub struct RowFilter<'a> {
    /// Only steps whose target index `k + H` falls in this range.
    pub target_steps: Option<Range<usize>>,
    /// Steps with `exclude[k] == true` are skipped.
    pub exclude: Option<&'a [bool]>,
}

/// Builds the training matrix: every valid step with complete features and
/// a present target, minus excluded steps.
pub fn build_design_matrix(source: &dyn SeriesAccess, spec: &EmbeddingSpec) -> Result<DesignMatrix> {
    build_design_matrix_filtered(source, spec, &RowFilter::default())
}

pub fn build_design_matrix_filtered(
    source: &dyn SeriesAccess,
    spec: &EmbeddingSpec,
    filter: &RowFilter<'_>,
) -> Result<DesignMatrix> {
    let rows = assemble(source, spec, filter, true)?;
    let y = rows.targets.into_iter().map(|t| t.expect("targets required")).collect();
    DesignMatrix::new(rows.x, y, rows.steps, spec.feature_names())
}

/// Application-time inputs: rows need complete features, targets optional.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRows {
    pub x: FeatureMatrix,
    pub row_timesteps: Vec<usize>,
    /// Observed target at `k + H`, when readable.
    pub targets: Vec<Option<f64>>,
    pub feature_names: Vec<String>,
}

pub fn build_inputs(
    source: &dyn SeriesAccess,
    spec: &EmbeddingSpec,
    filter: &RowFilter<'_>,
) -> Result<InputRows> {
    let rows = assemble(source, spec, filter, false)?;
    Ok(InputRows {
        x: rows.x,
        row_timesteps: rows.steps,
        targets: rows.targets,
        feature_names: spec.feature_names(),
    })
}

struct Assembled {
    x: FeatureMatrix,
    steps: Vec<usize>,
    targets: Vec<Option<f64>>,
}

fn assemble(
    source: &dyn SeriesAccess,
    spec: &EmbeddingSpec,
    filter: &RowFilter<'_>,
    require_target: bool,
) -> Result<Assembled> {
    spec.validate()?;
    let len = source.len();
    let steps = spec.valid_steps(len)?;
    let layout = spec.layout(source)?;
    let target = source.channel_index(&spec.target)?;
    if let Some(ex) = filter.exclude {
        if ex.len() != len {
            return Err(Error::dim(len, ex.len()));
        }
    }
    let mut data = Vec::new();
    let mut kept = Vec::new();
    let mut targets = Vec::new();
    let mut row = Vec::with_capacity(layout.len());
    'steps: for k in steps {
        let tk = k + spec.horizon;
        if let Some(r) = &filter.target_steps {
            if !r.contains(&tk) {
                continue;
            }
        }
        if filter.exclude.is_some_and(|ex| ex[k]) {
            continue;
        }
        row.clear();
        for &(c, off) in &layout {
            let idx = k as isize + off;
            if idx < 0 || idx as usize >= len {
                continue 'steps;
            }
            match source.value(c, idx as usize) {
                Some(v) => row.push(v),
                None => continue 'steps,
            }
        }
        let y = if require_target {
            match source.value(target, tk) {
                Some(v) => Some(v),
                None => continue,
            }
        } else {
            None
        };
        data.extend_from_slice(&row);
        kept.push(k);
        targets.push(y);
    }
    Ok(Assembled { x: FeatureMatrix::new(data, layout.len())?, steps: kept, targets })
}

/// Observed targets for application rows, read after forecasting. Kept
/// separate from [`build_inputs`] so the input path never touches them.
pub fn read_targets(source: &dyn SeriesAccess, spec: &EmbeddingSpec, steps: &[usize]) -> Result<Vec<Option<f64>>> {
    let t = source.channel_index(&spec.target)?;
    Ok(steps.iter().map(|&k| source.value(t, k + spec.horizon)).collect())
}
