//! One function per subcommand. Each reads its inputs, does the work, and
//! writes its outputs atomically under the given directory or file.

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nnqf::dataprep::{difference_channel, format_timestamp, ingest_csv, TimeSeriesTable};
use nnqf::evaluation::{
    fit_model, forecast, prepare_training, run_task, scaling_on_window, write_atomic, write_report, write_timing,
    EvaluationReport, ScalingRecord, TaskWindow, TrainedModel,
};
use nnqf::nnqf::apply_filter;
use nnqf::synth::{generate, Generator, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::config::{model_slug, IngestConfig, NightSettings, NnqfSettings, RunConfig, TaskPlan};
use crate::error::{CliError, CliResult, Context};
use crate::store::{read_store, write_store, Manifest};

/// Fields here are numbers, timestamps and validated names, so no quoting
/// is needed.
fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn cmd_ingest(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    if cfg.ingest.sources.is_empty() {
        return Err(CliError::config("ingest.sources lists no input files"));
    }
    let mut series = Vec::with_capacity(cfg.ingest.sources.len());
    for src in &cfg.ingest.sources {
        let schema = nnqf::dataprep::CsvSchema { select: src.select.clone(), ..cfg.ingest.schema.clone() };
        let mut table = ingest_csv(&src.path, &schema).context(|| src.path.display().to_string())?;
        for ch in &cfg.ingest.difference {
            table = difference_channel(&table, ch).context(|| format!("{}: differencing", src.path.display()))?;
        }
        series.push((src.name.clone(), table));
    }
    write_store(out, &series)
}

/// Config that runs the standard models on a generated dataset stored in
/// the same directory.
pub fn synthetic_config(spec: &SyntheticSpec, embedding: nnqf::dataprep::EmbeddingSpec) -> RunConfig {
    let household = spec.generator == Generator::HouseholdLoadLike;
    // Small sets keep at least four neighborhoods' worth of training rows.
    let train_rows = (spec.length as f64 * spec.train_fraction) as usize;
    let neighbors = (if household { 50 } else { 100 }).min((train_rows / 4).max(1));
    RunConfig {
        seed: spec.seed,
        store: PathBuf::from("."),
        ingest: IngestConfig { sources: Vec::new(), difference: Vec::new(), ..IngestConfig::default() },
        embedding,
        night: NightSettings { enabled: false, ..NightSettings::default() },
        selected_features: if household { 4 } else { 0 },
        nnqf: NnqfSettings { neighbors: vec![neighbors], ..NnqfSettings::default() },
        models: ["poly1", "knnqr", "tqr1"].map(String::from).to_vec(),
        tasks: TaskPlan::Split { fraction: spec.train_fraction },
        evaluation: crate::config::EvaluationSettings { day_filter: false, ..Default::default() },
        ..RunConfig::default()
    }
}

pub const SYNTH_SERIES: &str = "synthetic";
pub const SYNTH_CONFIG: &str = "nnqf.toml";

/// Writes a store with one series plus a ready-to-run `nnqf.toml`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> CliResult<RunConfig> {
    spec.validate()?;
    let data = generate(spec)?;
    write_store(out, &[(SYNTH_SERIES.to_string(), data.table)])?;
    let cfg = synthetic_config(spec, data.embedding);
    write_atomic(&out.join(SYNTH_CONFIG), cfg.to_toml()?.as_bytes())?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEntry {
    pub task: u32,
    pub series: String,
    pub model: String,
    /// Container path relative to the output directory.
    pub file: String,
    pub train_rows: usize,
    pub selected_features: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainIndex {
    pub entries: Vec<TrainedEntry>,
}

fn load_tables(cfg: &RunConfig) -> CliResult<Vec<(String, TimeSeriesTable)>> {
    let tables = read_store(&cfg.store)?;
    if tables.is_empty() {
        return Err(CliError::config(format!("store {} holds no series", cfg.store.display())));
    }
    Ok(tables)
}

/// Fits every configured model on the training span of every task and
/// series. Containers go to `models/task-<id>/<series>/<model>.json`, the
/// index to `models/index.json`, wall-clock times to `timing.csv`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, task: Option<u32>) -> CliResult<TrainIndex> {
    let tables = load_tables(cfg)?;
    let pcfg = cfg.pipeline();
    let specs = cfg.model_specs()?;
    let mut entries = Vec::new();
    let mut timing = Vec::new();
    for (name, table) in &tables {
        for (window, _) in cfg.windows(table, task)? {
            let ctx = || format!("task {} series {name}", window.id);
            let data = prepare_training(table, window.train.clone(), window.test.start, &pcfg).context(ctx)?;
            if data.guarded_reads > 0 {
                return Err(nnqf::Error::Contract("training read hidden power values".into())).context(ctx);
            }
            let dm = data.design_matrix()?;
            let mut filtered = Vec::new();
            for spec in &specs {
                let (filter_seconds, targets) = match spec.filter_neighbors() {
                    Some(k) => {
                        if !filtered.iter().any(|(n, _, _)| *n == k) {
                            let t0 = Instant::now();
                            let t = apply_filter(&dm, &data.nnqf_config(&pcfg, k)).context(ctx)?;
                            filtered.push((k, t, t0.elapsed().as_secs_f64()));
                        }
                        let (_, t, s) = filtered.iter().find(|(n, _, _)| *n == k).expect("filtered above");
                        (*s, Some(t))
                    }
                    None => (0.0, None),
                };
                let t0 = Instant::now();
                let model = fit_model(spec, &data, targets, &pcfg).context(ctx)?;
                let fit_seconds = t0.elapsed().as_secs_f64();

                let file = format!("models/task-{}/{name}/{}.json", window.id, model_slug(spec));
                write_atomic(&out.join(&file), &model.to_bytes()?)?;
                timing.push(vec![
                    window.id.to_string(),
                    name.clone(),
                    spec.label(),
                    data.selection_seconds.to_string(),
                    filter_seconds.to_string(),
                    fit_seconds.to_string(),
                ]);
                entries.push(TrainedEntry {
                    task: window.id,
                    series: name.clone(),
                    model: spec.label(),
                    file,
                    train_rows: data.y.len(),
                    selected_features: data.schema.feature_names.clone(),
                    warnings: model.warnings().iter().map(|w| format!("{w:?}")).collect(),
                });
            }
        }
    }
    let index = TrainIndex { entries };
    let mut json = serde_json::to_vec_pretty(&index).map_err(|e| nnqf::Error::Format(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&out.join("models/index.json"), &json)?;
    let header: Vec<String> = ["task", "series", "model", "selection_seconds", "filter_seconds", "fit_seconds"]
        .map(String::from)
        .to_vec();
    write_atomic(&out.join("timing.csv"), &csv_bytes(&header, &timing))?;
    Ok(index)
}

/// Which target steps to forecast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Span {
    /// Every step with complete inputs.
    All,
    /// The test span of a task.
    Task(u32),
    /// Target timestamps in `[start, end)`, unix seconds.
    Between(i64, i64),
}

fn span_steps(cfg: &RunConfig, table: &TimeSeriesTable, span: &Span) -> CliResult<Range<usize>> {
    let at = |t: i64| {
        let end = table.timestamps()[table.len() - 1] + table.step();
        if t == end {
            Some(table.len())
        } else {
            table.step_of(t)
        }
    };
    match *span {
        Span::All => Ok(0..table.len()),
        Span::Task(id) => Ok(cfg.windows(table, Some(id))?[0].0.test.clone()),
        Span::Between(a, b) => match (at(a), at(b)) {
            (Some(a), Some(b)) if a < b => Ok(a..b),
            _ => Err(nnqf::Error::InsufficientData(format!("span [{a}, {b}) is not inside the data")).into()),
        },
    }
}

/// Writes one row per forecast target: its timestamp, then one column per
/// level. Returns the number of rows.
pub fn cmd_forecast(cfg: &RunConfig, model_path: &Path, series: Option<&str>, span: &Span, out: &Path) -> CliResult<usize> {
    let bytes = std::fs::read(model_path).context(|| model_path.display().to_string())?;
    let model = TrainedModel::from_bytes(&bytes).context(|| model_path.display().to_string())?;
    let expected = cfg.embedding.feature_names();
    if model.predictor().schema().source_features != expected {
        return Err(nnqf::Error::Format(format!(
            "model inputs {:?} do not match the configured embedding {:?}",
            model.predictor().schema().source_features,
            expected
        )))
        .context(|| model_path.display().to_string());
    }
    let tables = load_tables(cfg)?;
    let (_, table) = match series {
        Some(s) => tables
            .iter()
            .find(|(n, _)| n == s)
            .ok_or_else(|| CliError::config(format!("series `{s}` not in the store")))?,
        None if tables.len() == 1 => &tables[0],
        None => return Err(CliError::config("store holds several series; pass --series")),
    };
    let steps = span_steps(cfg, table, span)?;
    let fc = forecast(table, &model, &cfg.pipeline(), steps)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(fc.levels.iter().map(|q| nnqf::level_label(*q)));
    let rows: Vec<Vec<String>> = fc
        .target_steps()
        .zip(&fc.values)
        .map(|(k, v)| {
            let mut r = vec![format_timestamp(table.timestamps()[k], table.time_format())];
            r.extend(v.iter().map(|x| x.to_string()));
            r
        })
        .collect();
    write_atomic(out, &csv_bytes(&header, &rows))?;
    Ok(rows.len())
}

/// Trains, forecasts and scores every task with all series pooled, then
/// writes the report tables and, separately, the timing tables.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path, task: Option<u32>) -> CliResult<EvaluationReport> {
    let tables = load_tables(cfg)?;
    let refs: Vec<&TimeSeriesTable> = tables.iter().map(|(_, t)| t).collect();
    let windows = cfg.windows(refs[0], task)?;
    for (name, t) in &tables[1..] {
        let w: Vec<TaskWindow> = cfg.windows(t, task)?.into_iter().map(|(w, _)| w).collect();
        if w != windows.iter().map(|(w, _)| w.clone()).collect::<Vec<_>>() {
            return Err(CliError::config(format!("series `{name}` does not share the first series' calendar")));
        }
    }
    let pcfg = cfg.pipeline();
    let specs = cfg.model_specs()?;
    let mut tasks = Vec::with_capacity(windows.len());
    for (window, bench) in &windows {
        let r = run_task(&refs, window, &pcfg, &specs, *bench).context(|| format!("task {}", window.id))?;
        if r.guarded_reads > 0 {
            return Err(nnqf::Error::Contract("training read hidden power values".into()).into());
        }
        tasks.push(r);
    }
    let report = EvaluationReport { levels: cfg.levels.clone(), tasks };
    write_report(out, &report)?;
    write_timing(out, &report)?;
    Ok(report)
}

/// Training-size sweep on one series and task; writes `scaling.csv`.
pub fn cmd_bench(cfg: &RunConfig, out: &Path, series: Option<&str>, task: Option<u32>) -> CliResult<Vec<ScalingRecord>> {
    let tables = load_tables(cfg)?;
    let (_, table) = match series {
        Some(s) => tables
            .iter()
            .find(|(n, _)| n == s)
            .ok_or_else(|| CliError::config(format!("series `{s}` not in the store")))?,
        None => &tables[0],
    };
    let (window, _) = cfg.windows(table, task)?.remove(0);
    let records = scaling_on_window(table, &window, &cfg.pipeline(), &cfg.scaling())?;
    let header: Vec<String> = [
        "fraction",
        "train_rows",
        "test_rows",
        "filter_seconds",
        "fit_seconds",
        "nnqf_apply_seconds",
        "knnqr_apply_seconds",
        "knnqr_visits",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.fraction.to_string(),
                r.train_rows.to_string(),
                r.test_rows.to_string(),
                r.filter_seconds.to_string(),
                r.fit_seconds.to_string(),
                r.nnqf_apply_seconds.to_string(),
                r.knnqr_apply_seconds.to_string(),
                r.knnqr_visits.to_string(),
            ]
        })
        .collect();
    write_atomic(&out.join("scaling.csv"), &csv_bytes(&header, &rows))?;
    Ok(records)
}
