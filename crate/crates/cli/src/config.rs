//! TOML run configuration. Every field has a default; the defaults are the
//! solar benchmark setup.

use std::path::{Path, PathBuf};

use nnqf::baselines::load_benchmark_table;
use nnqf::dataprep::{ColumnMapping, CsvSchema, EmbeddingSpec, RowSelect, TimeSeriesTable};
use nnqf::evaluation::{gefcom14_calendar, Machine, ModelSpec, NightFilter, PipelineConfig, ScalingConfig, TaskWindow};
use nnqf::nnqf::SearchStrategy;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

/// Accumulated radiation channels of the solar track: surface solar,
/// surface thermal and top net solar radiation.
pub const GEFCOM14_RADIATION: [&str; 3] = ["VAR169", "VAR175", "VAR178"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Canonical dataset directory.
    pub store: PathBuf,
    pub ingest: IngestConfig,
    pub embedding: EmbeddingSpec,
    pub night: NightSettings,
    /// Features kept by forward selection; 0 keeps all.
    pub selected_features: usize,
    /// Quantile levels; defaults to 0.01, ..., 0.99.
    pub levels: Vec<f64>,
    pub nnqf: NnqfSettings,
    /// Model kinds: `poly1`..`poly4`, `net<H>`, `knnqr`, `tqr<degree>`.
    pub models: Vec<String>,
    pub network: NetworkSettings,
    pub tasks: TaskPlan,
    pub machine: Machine,
    pub evaluation: EvaluationSettings,
    pub bench: BenchSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub sources: Vec<SourceConfig>,
    pub schema: CsvSchema,
    /// Channels replaced by their first differences after reading.
    pub difference: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub name: String,
    pub path: PathBuf,
    /// Row filter for multi-plant files, e.g. `{ column = "ZONEID", value = "1" }`.
    #[serde(default)]
    pub select: Option<RowSelect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NightSettings {
    pub enabled: bool,
    pub channel: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnqfSettings {
    pub neighbors: Vec<usize>,
    pub epsilon: f64,
    pub search: SearchStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskPlan {
    /// Rolling monthly Tasks 4 to 15; `only` restricts to some of them.
    Gefcom14 {
        #[serde(default)]
        only: Vec<u32>,
    },
    /// One split at a fraction of the series.
    Split { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    /// Reliability counts only rows where power or the median forecast
    /// exceeds `day_threshold`.
    pub day_filter: bool,
    pub day_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub fractions: Vec<f64>,
    pub neighbors: usize,
    pub degree: u32,
    pub repeats: usize,
    pub max_test_rows: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            store: PathBuf::from("store"),
            ingest: IngestConfig::default(),
            embedding: EmbeddingSpec::forecast_inputs("POWER", &GEFCOM14_RADIATION, 24, 24),
            night: NightSettings::default(),
            selected_features: 4,
            levels: nnqf::percentile_levels(),
            nnqf: NnqfSettings::default(),
            models: ["poly1", "poly2", "poly3", "poly4", "net6", "net10", "knnqr", "tqr1"].map(String::from).to_vec(),
            network: NetworkSettings::default(),
            tasks: TaskPlan::Gefcom14 { only: Vec::new() },
            machine: Machine::default(),
            evaluation: EvaluationSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl Default for IngestConfig {
    fn default() -> Self {
        let mut cols = GEFCOM14_RADIATION.to_vec();
        cols.push("POWER");
        Self {
            sources: Vec::new(),
            schema: CsvSchema {
                timestamp: "TIMESTAMP".into(),
                channels: cols.iter().map(|c| ColumnMapping::same(c)).collect(),
                power: Some("POWER".into()),
                select: None,
            },
            difference: GEFCOM14_RADIATION.map(String::from).to_vec(),
        }
    }
}

impl Default for NightSettings {
    fn default() -> Self {
        Self { enabled: true, channel: "VAR169".into(), threshold: 100_000.0 }
    }
}

impl Default for NnqfSettings {
    fn default() -> Self {
        Self { neighbors: vec![50, 100, 150, 200], epsilon: f64::INFINITY, search: SearchStrategy::Auto }
    }
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self { epochs: 2000, learning_rate: 0.5 }
    }
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self { day_filter: true, day_threshold: 0.05 }
    }
}

impl Default for BenchSettings {
    fn default() -> Self {
        let s = ScalingConfig::default();
        Self {
            fractions: s.fractions,
            neighbors: s.n_neighbors,
            degree: s.degree,
            repeats: s.repeats,
            max_test_rows: Some(500),
        }
    }
}

/// Parses one model kind into the specs it expands to over `neighbors`.
pub fn parse_model_kind(kind: &str, neighbors: &[usize]) -> CliResult<Vec<ModelSpec>> {
    let bad = || CliError::config(format!("unknown model kind `{kind}`"));
    let number = |prefix: &str| -> CliResult<u32> { kind[prefix.len()..].parse().map_err(|_| bad()) };
    let k = kind.to_ascii_lowercase();
    let specs = if k == "knnqr" {
        neighbors.iter().map(|&n| ModelSpec::Knnqr { n_neighbors: n }).collect()
    } else if k.starts_with("tqr") {
        let degree = if k == "tqr" { 1 } else { number("tqr")? };
        vec![ModelSpec::Tqr { degree }]
    } else if k.starts_with("poly") {
        let degree = number("poly")?;
        neighbors.iter().map(|&n| ModelSpec::Polynomial { degree, n_neighbors: n }).collect()
    } else if k.starts_with("net") {
        let hidden_units = number("net")? as usize;
        neighbors.iter().map(|&n| ModelSpec::Network { hidden_units, n_neighbors: n }).collect()
    } else {
        return Err(bad());
    };
    Ok(specs)
}

/// File-name friendly model label, e.g. `poly1-n200`.
pub fn model_slug(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Polynomial { degree, n_neighbors } => format!("poly{degree}-n{n_neighbors}"),
        ModelSpec::Network { hidden_units, n_neighbors } => format!("net{hidden_units}-n{n_neighbors}"),
        ModelSpec::Knnqr { n_neighbors } => format!("knnqr-n{n_neighbors}"),
        ModelSpec::Tqr { degree } => format!("tqr{degree}"),
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.store = base.join(&cfg.store);
        for s in &mut cfg.ingest.sources {
            s.path = base.join(&s.path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        nnqf::nnqf::validate_levels(&self.levels)?;
        if self.nnqf.neighbors.contains(&0) {
            return Err(CliError::config("neighbor counts must be positive"));
        }
        if !(self.nnqf.epsilon >= 0.0) {
            return Err(CliError::config("nnqf.epsilon must be non-negative"));
        }
        if let TaskPlan::Split { fraction } = self.tasks {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(CliError::config(format!("split fraction {fraction} outside (0, 1)")));
            }
        }
        self.model_specs()?;
        Ok(())
    }

    /// Every model kind expanded over the neighbor grid, in config order.
    pub fn model_specs(&self) -> CliResult<Vec<ModelSpec>> {
        if self.models.is_empty() {
            return Err(CliError::config("no model kinds configured"));
        }
        let mut out = Vec::new();
        for kind in &self.models {
            out.extend(parse_model_kind(kind, &self.nnqf.neighbors)?);
        }
        Ok(out)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            embedding: self.embedding.clone(),
            night: self
                .night
                .enabled
                .then(|| NightFilter { channel: self.night.channel.clone(), threshold: self.night.threshold }),
            selected_features: (self.selected_features > 0).then_some(self.selected_features),
            levels: self.levels.clone(),
            epsilon: self.nnqf.epsilon,
            search: self.nnqf.search,
            epochs: self.network.epochs,
            learning_rate: self.network.learning_rate,
            seed: self.seed,
            machine: self.machine,
            day_threshold: self.evaluation.day_filter.then_some(self.evaluation.day_threshold),
        }
    }

    pub fn scaling(&self) -> ScalingConfig {
        ScalingConfig {
            fractions: self.bench.fractions.clone(),
            n_neighbors: self.bench.neighbors,
            degree: self.bench.degree,
            repeats: self.bench.repeats,
            max_test_rows: self.bench.max_test_rows,
        }
    }

    /// Task windows on `table` with their benchmark losses, restricted to
    /// `only` when given.
    pub fn windows(&self, table: &TimeSeriesTable, only: Option<u32>) -> CliResult<Vec<(TaskWindow, Option<f64>)>> {
        let keep = |id: u32, listed: &[u32]| only.is_none_or(|o| o == id) && (listed.is_empty() || listed.contains(&id));
        let out: Vec<(TaskWindow, Option<f64>)> = match &self.tasks {
            TaskPlan::Gefcom14 { only: listed } => {
                let bench = load_benchmark_table();
                gefcom14_calendar()
                    .into_iter()
                    .filter(|t| keep(t.id, listed))
                    .map(|t| Ok((t.resolve(table)?, Some(bench.fraction(t.id)?))))
                    .collect::<nnqf::Result<_>>()?
            }
            TaskPlan::Split { fraction } => {
                let split = ((table.len() as f64) * fraction).round() as usize;
                if !keep(1, &[]) {
                    Vec::new()
                } else {
                    vec![(TaskWindow::single(1, table.len(), split.clamp(1, table.len() - 1))?, None)]
                }
            }
        };
        if out.is_empty() {
            return Err(CliError::config("no task selected"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_benchmark_setup() {
        let c = RunConfig::default();
        assert_eq!((c.embedding.horizon, c.embedding.lags), (24, 24));
        assert_eq!(c.levels.len(), 99);
        assert!(c.nnqf.epsilon.is_infinite());
        assert_eq!(c.night.threshold, 100_000.0);
        assert_eq!(c.selected_features, 4);
        assert_eq!(c.nnqf.neighbors, vec![50, 100, 150, 200]);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(toml::from_str::<RunConfig>("").unwrap(), RunConfig::default());
    }

    #[test]
    fn grid_expansion() {
        let specs = parse_model_kind("poly1", &[50, 100, 150, 200]).unwrap();
        assert_eq!(specs.len(), 4);
        assert_eq!(parse_model_kind("tqr", &[50, 100]).unwrap(), vec![ModelSpec::Tqr { degree: 1 }]);
        assert_eq!(
            parse_model_kind("net10", &[50]).unwrap(),
            vec![ModelSpec::Network { hidden_units: 10, n_neighbors: 50 }]
        );
        assert!(parse_model_kind("forest", &[50]).is_err());
    }

    #[test]
    fn bad_levels_rejected() {
        let c = RunConfig { levels: vec![0.5, 0.4], ..Default::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
